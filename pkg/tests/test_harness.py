import json
import math

import numpy as np
import pytest

from vlcc.codebook import LibraryParams, build_library
from vlcc.errors import ConfigError
from vlcc.exponents import ChannelMatrix, channel_mi, eta_default
from vlcc.harness import (
    EXPERIMENT_SCHEMA,
    ExperimentConfig,
    KindSpec,
    LegConfig,
    LemmaScale,
    compare_to_bound,
    config_from_json_dict,
    corollary1_workflow,
    estimate_error_rates,
    run_until_decisive,
    verify_lemmas,
    wilson_interval,
)
from vlcc.types_core import Distribution


def uniform_params(l, rate, d=1.0, n=None):
    return LibraryParams(
        D=d, n=n or l, lengths=(l,),
        types=(Distribution.from_counts([l // 2, l - l // 2]),), rates=(rate,),
    )


def test_wilson_interval_zero_counts():
    lo, hi = wilson_interval(0, 1000)
    assert lo == 0.0 and 0 < hi < 0.01
    lo2, hi2 = wilson_interval(1000, 1000)
    assert hi2 == 1.0 and lo2 > 0.99
    assert wilson_interval(0, 0) == (0.0, 1.0)


def test_config_json_round_trip_and_validation():
    doc = {
        "schema": EXPERIMENT_SCHEMA,
        "channel": [[0.9, 0.1], [0.1, 0.9]],
        "seed": 5,
        "legs": [
            {
                "name": "leg0",
                "library": {
                    "D": 1.0, "n": 16, "lengths": [16],
                    "type_counts": [[8, 8]], "rates": [0.125],
                },
                "schedule": {"kind": "round_robin", "messages": 10},
                "trials": 2,
                "families": ["fam"],
            }
        ],
    }
    cfg = config_from_json_dict(doc)
    assert cfg.legs[0].messages == 10
    with pytest.raises(ConfigError):
        config_from_json_dict({**doc, "schema": "bogus"})
    no_seed = {k: v for k, v in doc.items() if k != "seed"}
    with pytest.raises(ConfigError):
        config_from_json_dict(no_seed)
    with pytest.raises(ConfigError):
        LegConfig(name="x", library_params=None, library_path=None)


def small_cfg(trials=3, seed=11, eta=0.05, channel=None, l=16, rate=0.125,
              messages=20):
    return ExperimentConfig(
        channel=channel or ChannelMatrix.identity(2),
        seed=seed,
        eta=eta,
        legs=(
            LegConfig(
                name="leg0",
                library_params=uniform_params(l, rate),
                build_seed=3,
                schedule_kind="round_robin",
                messages=messages,
                trials=trials,
                families=("fam",),
            ),
        ),
    )


def test_estimate_identity_channel_zero_errors():
    report = estimate_error_rates(small_cfg())
    row = report.row("leg0", 0)
    assert row.errors == 0
    assert row.err_ci[0] == 0.0 and row.err_ci[1] > 0
    assert row.messages == 3 * 20
    assert row.edf_event_rate == 1.0


def test_estimate_reports_reproducible():
    r1 = estimate_error_rates(small_cfg())
    r2 = estimate_error_rates(small_cfg())
    assert r1.to_json_dict()["rows"] == r2.to_json_dict()["rows"]


def test_estimate_ci_shrinks_with_trials():
    noisy = ChannelMatrix.bsc(0.35)
    r1 = estimate_error_rates(small_cfg(trials=4, channel=noisy, eta=0.02))
    r2 = estimate_error_rates(small_cfg(trials=16, channel=noisy, eta=0.02))
    w1 = r1.row("leg0", 0).err_ci[1] - r1.row("leg0", 0).err_ci[0]
    w2 = r2.row("leg0", 0).err_ci[1] - r2.row("leg0", 0).err_ci[0]
    assert w2 < w1
    assert w2 / w1 == pytest.approx(0.5, abs=0.2)


def test_report_csv_and_event_histogram(tmp_path):
    noisy = ChannelMatrix.bsc(0.3)
    report = estimate_error_rates(small_cfg(trials=2, channel=noisy, eta=0.02))
    row = report.row("leg0", 0)
    assert sum(row.event_histogram.values()) >= row.errors > 0
    out = tmp_path / "report.csv"
    report.to_csv(out)
    lines = out.read_text().strip().splitlines()
    assert len(lines) == 2 and lines[0].startswith("leg,book")


def test_compare_to_bound_requires_two_lengths():
    report = estimate_error_rates(small_cfg())
    with pytest.raises(ConfigError):
        compare_to_bound(report, small_cfg())


def two_length_cfg(rate, channel, messages=40, trials=2, eta=0.02,
                   lengths=(16, 24)):
    legs = tuple(
        LegConfig(
            name=f"l{l}",
            library_params=uniform_params(l, rate),
            build_seed=3,
            schedule_kind="round_robin",
            messages=messages,
            trials=trials,
            families=("fam",),
        )
        for l in lengths
    )
    return ExperimentConfig(channel=channel, seed=7, eta=eta, legs=legs)


def test_compare_to_bound_exponent_and_vacuous():
    ident = ChannelMatrix.identity(2)
    cfg = two_length_cfg(0.125, ident)
    report = estimate_error_rates(cfg)
    verdicts = compare_to_bound(report, cfg)
    assert len(verdicts) == 1
    assert verdicts[0].kind == "exponent" and verdicts[0].passed
    # rate pinned against channel MI: E_r collapses, verdict is vacuous
    p = Distribution.from_counts([8, 8])
    mi = channel_mi(p, ChannelMatrix.bsc(0.2))
    cfg2 = two_length_cfg(mi - 1e-9, ChannelMatrix.bsc(0.2), messages=10, trials=1)
    report2 = estimate_error_rates(cfg2)
    verdicts2 = compare_to_bound(report2, cfg2)
    assert verdicts2[0].kind == "vacuous" and verdicts2[0].passed


def test_erasure_regime_trend_feasible_variant():
    """Theorem 1(ii) behavior at rates above channel MI, desk scale."""
    w = ChannelMatrix.bsc(0.3)
    legs = []
    for l, messages, trials in ((32, 400, 2), (64, 150, 2)):
        legs.append(
            LegConfig(
                name=f"l{l}",
                library_params=uniform_params(l, 0.25),
                build_seed=2,
                schedule_kind="round_robin",
                messages=messages,
                trials=trials,
                families=("erasure",),
            )
        )
    cfg = ExperimentConfig(channel=w, seed=13, legs=tuple(legs))
    report = estimate_error_rates(cfg)
    verdicts = compare_to_bound(report, cfg, erasure_target=0.9)
    assert verdicts[0].kind == "erasure"
    assert verdicts[0].passed, verdicts[0].detail


def test_verify_lemmas_fast_scale():
    scale = LemmaScale(
        type_bound_max_n=10,
        second_order_max_n=7,
        expurgation_lengths=(8, 10),
        packing_lengths=(6,),
        expectation_lengths=(4,),
    )
    checks = verify_lemmas(scale)
    assert all(c.passed for c in checks)
    names = {c.name for c in checks}
    assert {"type-class bounds", "second-order grouping", "expurgation fraction",
            "packing partition", "expectation bound"} <= names


def test_corollary1_single_kind_reduction():
    w = ChannelMatrix.bsc(0.05)
    report = corollary1_workflow([KindSpec(32, 0.1)], w, seed=4,
                                 messages_per_kind=60)
    res = report.kinds[0]
    assert not res.used_rate_zero
    assert res.correct_rate >= 0.95
    assert res.declared_erasure_rate == 0.0


def test_corollary1_rate_zero_branch():
    w = ChannelMatrix.bsc(0.3)
    report = corollary1_workflow([KindSpec(32, 0.9)], w, seed=4,
                                 messages_per_kind=60)
    res = report.kinds[0]
    assert res.used_rate_zero
    assert res.declared_erasure_rate >= 0.95
    assert report.skipped_books


def test_run_until_decisive_zero_error_case():
    def make_config(trials, seed):
        return small_cfg(trials=trials, seed=seed)

    errors, messages, ci = run_until_decisive(
        make_config, "leg0", 0, bar=0.01, seed=17, batch_trials=4, max_batches=20
    )
    assert errors == 0
    assert ci[1] <= 0.01


def test_mutual_exclusion_audit_via_scores():
    noisy = ChannelMatrix.bsc(0.25)
    report = estimate_error_rates(small_cfg(trials=3, channel=noisy, eta=0.05))
    row = report.row("leg0", 0)
    # an all-erasure message can be neither correct nor an edf event
    assert row.erasure_runs + row.edf_events == row.messages
