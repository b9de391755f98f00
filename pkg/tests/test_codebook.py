import itertools
import math
from fractions import Fraction

import numpy as np
import pytest

from vlcc.codebook import (
    CodebookLibrary,
    LibraryParams,
    build_library,
    codebook_size,
    default_r_min,
    expurgation_fraction_exact,
    gamma_default,
    gamma_independent_mask,
    is_gamma_independent,
    library_score,
    packing_bound_exponent,
    packing_statistic,
    sample_expurgated,
    sample_uniform_type_class,
)
from vlcc.errors import DomainError, ResourceBudgetError, SamplingError
from vlcc.lq_array import LqGeometry, subtype_of
from vlcc.types_core import (
    Distribution,
    empirical_type,
    entropy,
    generalized_js,
    iter_type_class,
    mutual_information,
    type_class_size,
)


def small_params(l=6, rate=None):
    rate = 2.0 / l if rate is None else rate
    return LibraryParams(
        D=1.0,
        n=l,
        lengths=(l, l),
        types=(
            Distribution.from_counts([l // 2, l - l // 2]),
            Distribution.from_counts([l // 2 - 1, l - l // 2 + 1]),
        ),
        rates=(rate, rate),
    )


def test_codebook_size_arithmetic():
    assert codebook_size(32, 0.25) == 256
    assert codebook_size(64, 0.2) == 7131
    assert codebook_size(10, 0.0) == 1


def test_sample_uniform_type_class_point_mass(rng):
    p = Distribution.from_counts([0, 5])
    assert np.array_equal(sample_uniform_type_class(p, rng), np.ones(5, dtype=int))


def test_sample_uniform_type_class_is_uniform(rng):
    p = Distribution.from_counts([2, 2])
    draws = 60000
    counts = {}
    for _ in range(draws):
        s = tuple(sample_uniform_type_class(p, rng))
        counts[s] = counts.get(s, 0) + 1
    assert len(counts) == 6
    sigma = math.sqrt(draws * (1 / 6) * (5 / 6))
    for s, c in counts.items():
        assert abs(c - draws / 6) <= 3 * sigma


def test_sample_output_always_on_type(rng):
    p = Distribution.from_counts([3, 2, 4])
    for _ in range(20):
        x = sample_uniform_type_class(p, rng)
        assert empirical_type(x, alphabet_size=3) == p


def test_default_r_min():
    assert default_r_min(8) == 9
    assert default_r_min(1024) == 100


def test_is_gamma_independent_cases():
    assert is_gamma_independent([1] * 12, 0.1, r_min_override=2)
    # identical prefix/suffix of an alternating word give MI = 1
    alt = [0, 1] * 6
    assert not is_gamma_independent(alt, 0.5, r_min_override=2)
    # default r_min makes the test vacuous at l = 8: (log2 8)^2 = 9 > 4
    for bits in itertools.product((0, 1), repeat=8):
        assert is_gamma_independent(np.array(bits), 0.01)
    with pytest.raises(DomainError):
        is_gamma_independent([0, 1], 0.0)


def test_gamma_mask_matches_scalar(rng):
    block = rng.integers(0, 2, size=(200, 14))
    mask = gamma_independent_mask(block, 0.4, r_min_override=2)
    for row, ok in zip(block, mask):
        assert is_gamma_independent(row, 0.4, r_min_override=2) == ok


def test_sample_expurgated_large_gamma_accepts_first(rng):
    p = Distribution.from_counts([8, 8])
    rng2 = np.random.default_rng(5)
    x = sample_expurgated(p, 2.5, rng2, r_min_override=2)
    rng3 = np.random.default_rng(5)
    assert np.array_equal(x, sample_uniform_type_class(p, rng3))


def test_sample_expurgated_empty_range_is_plain_sampling(rng):
    p = Distribution.from_counts([4, 4])  # default r_min = 9 > 4
    rng2 = np.random.default_rng(6)
    rng3 = np.random.default_rng(6)
    assert np.array_equal(
        sample_expurgated(p, 0.01, rng2), sample_uniform_type_class(p, rng3)
    )


def test_sample_expurgated_exhaustion():
    # pick a seed whose first draw has dependent prefix/suffix, then forbid retries
    p = Distribution.from_counts([2, 2])
    seed = next(
        s for s in range(100)
        if not is_gamma_independent(
            sample_uniform_type_class(p, np.random.default_rng(s)), 1e-9,
            r_min_override=2,
        )
    )
    with pytest.raises(SamplingError):
        sample_expurgated(p, 1e-9, np.random.default_rng(seed), max_attempts=1,
                          r_min_override=2)


def test_expurgation_fraction_trivial_cases():
    p = Distribution.from_counts([7, 7])
    assert expurgation_fraction_exact(p, 1.5, r_min_override=2) == 0
    p8 = Distribution.from_counts([4, 4])
    assert expurgation_fraction_exact(p8, 0.05) == 0  # vacuous default range
    with pytest.raises(ResourceBudgetError):
        expurgation_fraction_exact(p, 0.3, r_min_override=2, budget=10)


def test_expurgation_fraction_monotone_in_gamma():
    p = Distribution.from_counts([5, 5])
    fracs = [
        expurgation_fraction_exact(p, g, r_min_override=2)
        for g in (0.2, 0.4, 0.7, 0.95, 1.01)
    ]
    assert all(b <= a for a, b in zip(fracs, fracs[1:]))
    assert fracs[-1] == 0  # MI is capped by log2 of the alphabet size


def test_sampler_acceptance_matches_exact_fraction(rng):
    p = Distribution.from_counts([8, 8])
    gamma, r_min = 0.3, 2
    bad = expurgation_fraction_exact(p, gamma, r_min_override=r_min)
    accept_p = 1.0 - float(bad)
    draws = 100_000
    base = np.repeat(np.arange(2), [8, 8])
    block = rng.permuted(np.tile(base, (draws, 1)), axis=1)
    accepted = int(gamma_independent_mask(block, gamma, r_min_override=r_min).sum())
    sigma = math.sqrt(draws * accept_p * (1 - accept_p))
    assert abs(accepted - draws * accept_p) <= 3 * sigma


def test_build_library_shapes_and_determinism():
    params = LibraryParams(
        D=1.0, n=32, lengths=(32,),
        types=(Distribution.from_counts([16, 16]),), rates=(0.25,),
    )
    lib = build_library(params, seed=0)
    assert lib.books[0].shape == (256, 32)
    lib.validate()
    lib2 = build_library(params, seed=0)
    assert all(np.array_equal(a, b) for a, b in zip(lib.books, lib2.books))
    lib3 = build_library(params, seed=1)
    assert not all(np.array_equal(a, b) for a, b in zip(lib.books, lib3.books))


def test_build_library_single_zero_rate_book():
    params = LibraryParams(
        D=1.0, n=16, lengths=(16,),
        types=(Distribution.from_counts([8, 8]),), rates=(0.0,),
    )
    lib = build_library(params, seed=4)
    assert lib.books[0].shape == (1, 16)


def test_build_library_gamma_default_and_budget():
    params = small_params(l=8)
    lib = build_library(params, seed=2)
    assert lib.gamma == pytest.approx(gamma_default(8))
    with pytest.raises(ResourceBudgetError):
        build_library(params, seed=2, max_total_symbols=10)


def test_build_library_distinct():
    params = LibraryParams(
        D=1.0, n=6, lengths=(6,),
        types=(Distribution.from_counts([3, 3]),), rates=(2.0 / 6,),
    )
    lib = build_library(params, gamma=2.0, seed=9, distinct=True)
    rows = {tuple(r) for r in lib.books[0]}
    assert len(rows) == 4


def test_library_serialization_round_trip(tmp_path):
    lib = build_library(small_params(), gamma=2.0, seed=3, r_min_override=2)
    text1 = lib.to_json()
    text2 = lib.to_json()
    assert text1 == text2
    path = tmp_path / "lib.json"
    lib.save(path)
    loaded = CodebookLibrary.load(path)
    assert loaded.to_json() == text1
    assert all(np.array_equal(a, b) for a, b in zip(lib.books, loaded.books))


def test_params_validation():
    with pytest.raises(DomainError):
        LibraryParams(D=0.5, n=10, lengths=(4,),
                      types=(Distribution.from_counts([2, 2]),), rates=(0.1,))
    with pytest.raises(DomainError):
        LibraryParams(D=1.0, n=4, lengths=(4,),
                      types=(Distribution.from_counts([2, 1]),), rates=(0.1,))


def _nested_loop_packing_recount(lib, k, q, v):
    """Independent recount: manual array slicing, no shared subtype code."""
    lengths = [lib.params.lengths[i] for i in k]
    l_hat, rest = lengths[0], lengths[1:]
    off = l_hat + q - sum(rest)
    count = 0
    g = len(rest)
    exclude = g == 1 and k[0] == k[1] and q == 0
    from vlcc.types_core import joint_type, empirical_type

    for a_hat in range(len(lib.books[k[0]])):
        x_hat = lib.books[k[0]][a_hat]
        for picks in itertools.product(*(range(len(lib.books[i])) for i in k[1:])):
            if exclude and picks[0] == a_hat:
                continue
            row2 = np.concatenate([lib.books[i][a] for i, a in zip(k[1:], picks)])
            blocks = []
            if off < 0:
                blocks.append(empirical_type(row2[:-off], alphabet_size=2))
            elif off > 0:
                blocks.append(empirical_type(x_hat[:off], alphabet_size=2))
            else:
                blocks.append(None)
            pos = off
            for li in rest:
                a = max(0, pos)
                b = min(l_hat, pos + li)
                blocks.append(
                    joint_type(x_hat[a:b], row2[a - off : b - off], dims=(2, 2))
                )
                pos += li
            blocks.append(
                empirical_type(row2[len(row2) - q :], alphabet_size=2) if q else None
            )
            count += tuple(blocks) == v.blocks
    return count


def test_packing_statistic_matches_recount():
    lib = build_library(small_params(l=6), gamma=2.0, seed=11, r_min_override=2)
    checked = 0
    for k in ((0, 1), (1, 0, 1)):
        l_hat = lib.params.lengths[k[0]]
        rest = tuple(lib.params.lengths[i] for i in k[1:])
        for q in range(0, rest[-1]):
            geom = LqGeometry(l_hat=l_hat, lengths=rest, q=q)
            from vlcc.lq_array import validate_geometry

            if validate_geometry(geom, require_cover=True):
                continue
            seen = {}
            for a_hat in range(len(lib.books[k[0]])):
                for picks in itertools.product(
                    *(range(len(lib.books[i])) for i in k[1:])
                ):
                    v = subtype_of(
                        geom, lib.books[k[0]][a_hat],
                        [lib.books[i][a] for i, a in zip(k[1:], picks)],
                        alphabet_size=2,
                    )
                    seen[v] = None
            for v in seen:
                ours = packing_statistic(lib, k, q, v)
                theirs = _nested_loop_packing_recount(lib, k, q, v)
                assert ours == theirs
                checked += 1
    assert checked > 5


def test_packing_statistic_exclusion_and_zero():
    lib = build_library(small_params(l=6), gamma=2.0, seed=11, r_min_override=2,
                        distinct=True)
    # full-overlap diagonal subtype of a codeword with itself: the self pair
    # is excluded, and distinct codewords cannot produce a diagonal joint
    geom = LqGeometry(l_hat=6, lengths=(6,), q=0)
    x = lib.books[0][0]
    v = subtype_of(geom, x, [x], alphabet_size=2)
    assert packing_statistic(lib, (0, 0), 0, v) == 0
    with pytest.raises(ResourceBudgetError):
        packing_statistic(lib, (0, 0), 0, v, budget=1)


def test_packing_bound_exponent_formula(rng):
    lib = build_library(small_params(l=6), gamma=2.0, seed=13, r_min_override=2)
    geom = LqGeometry(l_hat=6, lengths=(6, 6), q=3)
    x_hat, x1, x2 = lib.books[0][1], lib.books[1][0], lib.books[0][2]
    v = subtype_of(geom, x_hat, [x1, x2], alphabet_size=2)
    e = packing_bound_exponent((0, 1, 0), 3, v, lib.params)
    # independent re-evaluation from the displayed formula
    mids = v.middle()
    mi_sum = sum(m.denominator * mutual_information(m) for m in mids)
    js = generalized_js([m.marginal(0) for m in mids])
    rates = lib.params.rates
    lens = lib.params.lengths
    expected = -mi_sum - 6 * js + 6 * rates[0] + lens[1] * rates[1] + lens[0] * rates[0]
    assert abs(e - expected) < 1e-9


def test_packing_bound_exponent_trivial_case():
    # g = 1 full-overlap diagonal subtype: I = H(P), J = 0
    l = 6
    p = Distribution.from_counts([3, 3])
    params = LibraryParams(D=1.0, n=l, lengths=(l, l), types=(p, p),
                           rates=(2.0 / l, 2.0 / l))
    lib = build_library(params, gamma=2.0, seed=1, r_min_override=2)
    x = lib.books[0][0]
    geom = LqGeometry(l_hat=l, lengths=(l,), q=0)
    v = subtype_of(geom, x, [x], alphabet_size=2)
    e = packing_bound_exponent((0, 0), 0, v, lib.params)
    assert abs(e - (-l * entropy(p) + 2 * l * (2.0 / l))) < 1e-9


def test_library_score_partition_and_median_gate():
    params = small_params(l=6)
    scores = [
        library_score(build_library(params, gamma=2.0, seed=s, r_min_override=2))
        for s in range(6)
    ]
    assert all(math.isfinite(s) and s > 0 for s in scores)
    median = sorted(scores)[len(scores) // 2]
    lib = build_library(params, gamma=2.0, seed=100, r_min_override=2,
                        score_threshold=2 * median, score_retries=12)
    assert lib.score is not None and lib.score <= 2 * median


def test_every_codeword_expurgated_and_typed():
    params = small_params(l=14, rate=0.1)
    lib = build_library(params, gamma=0.9, seed=21, r_min_override=2)
    lib.validate()
    for book, p in zip(lib.books, params.types):
        for row in book:
            assert empirical_type(row, alphabet_size=2) == p
            assert is_gamma_independent(row, 0.9, r_min_override=2)


def test_gamma_default_value():
    assert gamma_default(1024) == pytest.approx(1.0 / math.sqrt(10.0))
