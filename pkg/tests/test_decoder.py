import math

import numpy as np
import pytest

from vlcc.channel_sim import Schedule, run_session
from vlcc.codebook import CodebookLibrary, LibraryParams, build_library
from vlcc.decoder import (
    ERASURE,
    PAIR,
    SPACE,
    DecoderConfig,
    DecoderOutput,
    classify_error_event,
    decode_stream,
    decode_trace,
    default_config,
    score_messages,
    stage1,
    stage2,
    window_metric,
)
from vlcc.errors import DomainError
from vlcc.exponents import ChannelMatrix
from vlcc.types_core import Distribution, empirical_type, entropy, mi_from_counts


def tiny_lib(seed=3, distinct=False):
    params = LibraryParams(
        D=0.75, n=16, lengths=(12, 16),
        types=(Distribution.from_counts([5, 7]), Distribution.from_counts([8, 8])),
        rates=(0.25, 0.25),
    )
    return build_library(params, gamma=2.0, seed=seed, r_min_override=2,
                         distinct=distinct)


def manual_lib(books, rates, d=1.0):
    """Library built directly from explicit codeword arrays."""
    books = [np.asarray(b, dtype=np.int64) for b in books]
    lengths = tuple(b.shape[1] for b in books)
    types = tuple(
        empirical_type(b[0], alphabet_size=int(max(bb.max() for bb in books)) + 1)
        for b in books
    )
    params = LibraryParams(D=d, n=max(lengths), lengths=lengths, types=types,
                           rates=rates)
    return CodebookLibrary(params=params, books=books, gamma=99.0, seed=0)


def test_window_metric_identity_aligned():
    lib = tiny_lib()
    x = lib.books[0][2]
    y = np.concatenate([np.zeros(4, dtype=int), x, np.zeros(4, dtype=int)])
    m = window_metric(lib, 0, 2, y, 4)
    p = lib.params.types[0]
    assert abs(m - 12 * (entropy(p) - 0.25)) < 1e-12
    with pytest.raises(DomainError):
        window_metric(lib, 0, 2, y, 15)


def test_window_metric_constant_codeword():
    books = [np.array([[1, 1, 1, 1]]), np.array([[0, 1, 0, 1]])]
    lib = manual_lib(books, rates=(0.5, 0.5))
    y = np.array([0, 1, 1, 0, 1, 0])
    assert window_metric(lib, 0, 0, y, 1) == 4 * (0.0 - 0.5)


def test_window_metric_matches_recount(rng):
    lib = tiny_lib()
    y = rng.integers(0, 2, size=40)
    for h in (0, 1):
        l = lib.params.lengths[h]
        for b in (0, 1):
            for t in (0, 7, 40 - l):
                m = window_metric(lib, h, b, y, t)
                x = lib.books[h][b]
                counts = np.zeros((2, 2), dtype=np.int64)
                for xi, yi in zip(x, y[t : t + l]):
                    counts[xi, yi] += 1
                expected = l * (mi_from_counts(counts) - lib.params.rates[h])
                assert m == expected


def test_stage1_single_candidate():
    books = [np.array([[0, 1, 1, 0]])]
    lib = manual_lib(books, rates=(0.0,))
    y = np.array([0, 1, 1, 0, 1])
    res = stage1(lib, y, 0, DecoderConfig(eta=0.0))
    assert res.unique and res.book == 0 and res.msg == 0


def test_stage1_duplicate_codewords_tie():
    books = [np.array([[0, 1, 1, 0], [0, 1, 1, 0], [1, 1, 0, 0]])]
    lib = manual_lib(books, rates=(0.5,))
    y = np.array([0, 1, 1, 0])
    res = stage1(lib, y, 0, DecoderConfig(eta=0.0))
    assert not res.unique
    assert res.metric == res.runner_up


def test_stage2_shifted_copy_rejects():
    # an alternating word repeats under a shift of 2: equal metrics in the
    # stage-2 window force rejection
    books = [np.array([[0, 1, 0, 1, 0, 1, 0, 1]])]
    lib = manual_lib(books, rates=(0.0,))
    y = np.array([0, 1] * 8)
    cfg = DecoderConfig(eta=0.1)
    res = stage1(lib, y, 2, cfg)
    assert res.unique  # only one codeword, so stage 1 is trivially unique
    assert res.metric / 8 > cfg.eta
    assert not stage2(lib, y, 2, res, cfg)


def test_stage2_threshold_rejects():
    lib = tiny_lib()
    x = lib.books[1][0]
    y = np.concatenate([np.zeros(16, dtype=int), x, np.zeros(16, dtype=int)])
    cfg_hi = DecoderConfig(eta=5.0)
    res = stage1(lib, y, 16, cfg_hi)
    assert not stage2(lib, y, 16, res, cfg_hi)
    out = decode_stream(lib, y, cfg_hi)
    assert np.all(out.kinds == ERASURE)


def test_decode_noiseless_exact_recovery():
    # lengths large enough that no cross-boundary window reproduces a codeword
    params = LibraryParams(
        D=0.75, n=32, lengths=(24, 32),
        types=(Distribution.from_counts([10, 14]), Distribution.from_counts([13, 19])),
        rates=(0.25, 0.25),
    )
    lib = build_library(params, gamma=2.0, seed=3, r_min_override=2, distinct=True)
    sched = Schedule.round_robin(2, 40)
    trace = run_session(lib, sched, ChannelMatrix.identity(2), seed=6, trial=0)
    out = decode_trace(lib, trace, DecoderConfig(eta=0.05))
    summary = score_messages(trace, out)
    assert all(oc.correct for oc in summary.outcomes)
    out.validate_structure(lib.params.lengths)
    # decoded boundaries coincide with the schedule ground truth
    for j in trace.measured_slots():
        s = trace.start_times[j]
        assert out.kinds[s] == PAIR
        assert out.books[s] == trace.schedule[j]
        assert out.msgs[s] == trace.messages[j]


def test_decode_engines_agree(rng):
    lib = tiny_lib()
    w = ChannelMatrix.bsc(0.08)
    sched = Schedule.round_robin(2, 10)
    for trial in range(6):
        trace = run_session(lib, sched, w, seed=12, trial=trial)
        cfg = DecoderConfig(eta=0.05)
        a = decode_stream(lib, trace.output_stream, cfg, engine="table")
        b = decode_stream(lib, trace.output_stream, cfg, engine="reference")
        assert np.array_equal(a.kinds, b.kinds)
        assert np.array_equal(a.books, b.books)
        assert np.array_equal(a.msgs, b.msgs)


def test_decode_deterministic():
    lib = tiny_lib()
    trace = run_session(lib, Schedule.round_robin(2, 8), ChannelMatrix.bsc(0.1),
                        seed=3, trial=0)
    a = decode_trace(lib, trace, DecoderConfig(eta=0.05))
    b = decode_trace(lib, trace, DecoderConfig(eta=0.05))
    assert np.array_equal(a.kinds, b.kinds) and np.array_equal(a.msgs, b.msgs)


def test_decode_locality(rng):
    lib = tiny_lib()
    w = ChannelMatrix.bsc(0.05)
    trace = run_session(lib, Schedule.round_robin(2, 16), w, seed=21, trial=0)
    y = trace.output_stream.copy()
    cfg = DecoderConfig(eta=0.05)
    base = decode_stream(lib, y, cfg)
    radius = 2 * lib.params.max_length - 2
    t = int(trace.start_times[trace.measured_start + 6])
    for _ in range(4):
        y2 = y.copy()
        pos = int(rng.integers(0, t - radius - 1))
        y2[pos] ^= 1
        far = decode_stream(lib, y2, cfg)
        assert far.kinds[t] == base.kinds[t]
        assert far.books[t] == base.books[t]
        assert far.msgs[t] == base.msgs[t]


def test_decode_ternary_alphabet_reference_path():
    # non-uniform composition so no symbol relabeling can fake a codeword
    books = [np.array(
        [[2, 2, 1, 2, 1, 2, 2, 0, 1],
         [1, 2, 1, 2, 0, 2, 2, 2, 1],
         [2, 0, 2, 2, 1, 2, 2, 1, 1]]
    )]
    lib = manual_lib(books, rates=(0.15,))
    assert lib.alphabet_size == 3
    sched = Schedule((0,) * 6)
    trace = run_session(lib, sched, ChannelMatrix.identity(3), seed=5, trial=0)
    out = decode_trace(lib, trace, DecoderConfig(eta=0.05))
    summary = score_messages(trace, out)
    assert all(oc.correct for oc in summary.outcomes)


def test_default_config_uses_eta_default():
    lib = tiny_lib()
    assert default_config(lib).eta == pytest.approx(1.0 / 4.0)


def test_score_messages_perfect_and_erasure():
    lib = tiny_lib(distinct=True)
    trace = run_session(lib, Schedule.round_robin(2, 10), ChannelMatrix.identity(2),
                        seed=9, trial=0)
    out = decode_trace(lib, trace, DecoderConfig(eta=0.05))
    summary = score_messages(trace, out)
    assert all(oc.correct and oc.edf_event and not oc.erasure_run
               for oc in summary.outcomes)
    # all-erasure output scores zero correct and zero edf events
    blank = DecoderOutput(
        kinds=np.zeros(len(out), dtype=np.int8),
        books=np.full(len(out), -1, dtype=np.int32),
        msgs=np.full(len(out), -1, dtype=np.int64),
    )
    s2 = score_messages(trace, blank)
    assert all(oc.erasure_run and not oc.edf_event and not oc.correct
               for oc in s2.outcomes)
    assert all(oc.label == "erasure-run" for oc in s2.outcomes)


def test_score_messages_shifted_boundary_is_error():
    lib = tiny_lib(distinct=True)
    trace = run_session(lib, Schedule.round_robin(2, 6), ChannelMatrix.identity(2),
                        seed=9, trial=0)
    out = decode_trace(lib, trace, DecoderConfig(eta=0.05))
    j = trace.measured_start + 2
    s = int(trace.start_times[j])
    shifted = DecoderOutput(out.kinds.copy(), out.books.copy(), out.msgs.copy())
    l = int(trace.lengths[j])
    shifted.kinds[s : s + l] = ERASURE
    shifted.kinds[s + 1] = PAIR
    shifted.books[s + 1] = trace.schedule[j]
    shifted.msgs[s + 1] = trace.messages[j]
    shifted.kinds[s + 2 : s + l] = SPACE
    summary = score_messages(trace, shifted)
    oc = summary.outcomes[2]
    assert not oc.correct and oc.label == "error"
    with pytest.raises(DomainError):
        score_messages(trace, DecoderOutput(
            kinds=np.zeros(3, dtype=np.int8),
            books=np.full(3, -1, dtype=np.int32),
            msgs=np.full(3, -1, dtype=np.int64),
        ))


def test_classify_duplicate_codewords_same_position():
    dup = np.array([[0, 1, 1, 0, 1, 0], [0, 1, 1, 0, 1, 0]])
    lib = manual_lib([dup], rates=(1.0 / 6.0,))
    sched = Schedule((0, 0, 0))
    trace = run_session(lib, sched, ChannelMatrix.identity(2), seed=0, trial=0,
                        guard=1)
    cfg = DecoderConfig(eta=0.01)
    out = decode_trace(lib, trace, cfg)
    summary = score_messages(trace, out)
    for oc in summary.outcomes:
        assert not oc.correct  # stage-1 ties force erasures
        labels = classify_error_event(trace, out, lib, oc.slot, cfg)
        assert "same-position" in labels


def test_classify_threshold_class():
    lib = tiny_lib(distinct=True)
    cfg = DecoderConfig(eta=5.0)
    trace = run_session(lib, Schedule.round_robin(2, 4), ChannelMatrix.identity(2),
                        seed=1, trial=0)
    out = decode_trace(lib, trace, cfg)
    summary = score_messages(trace, out)
    for oc in summary.outcomes:
        labels = classify_error_event(trace, out, lib, oc.slot, cfg)
        assert "threshold" in labels


def test_classify_covers_every_error(rng):
    lib = tiny_lib()
    cfg = DecoderConfig(eta=0.1)
    w = ChannelMatrix.bsc(0.12)
    found = 0
    for trial in range(6):
        trace = run_session(lib, Schedule.round_robin(2, 10), w, seed=31, trial=trial)
        out = decode_trace(lib, trace, cfg)
        summary = score_messages(trace, out)
        for oc in summary.outcomes:
            if not oc.correct:
                found += 1
                assert len(classify_error_event(trace, out, lib, oc.slot, cfg)) >= 1
    assert found > 0


def test_decoder_output_tokens_round_trip():
    kinds = np.array([PAIR, SPACE, SPACE, ERASURE, PAIR, SPACE], dtype=np.int8)
    books = np.array([1, -1, -1, -1, 0, -1], dtype=np.int32)
    msgs = np.array([7, -1, -1, -1, 2, -1], dtype=np.int64)
    out = DecoderOutput(kinds=kinds, books=books, msgs=msgs)
    text = out.to_tokens()
    assert text == "1:7,-,-,e,0:2,-"
    back = DecoderOutput.from_tokens(text)
    assert np.array_equal(back.kinds, kinds)
    assert np.array_equal(back.books, books)
    assert np.array_equal(back.msgs, msgs)


def test_validate_structure_rejects_bad_spacing():
    kinds = np.array([PAIR, SPACE, ERASURE], dtype=np.int8)
    books = np.array([0, -1, -1], dtype=np.int32)
    msgs = np.array([0, -1, -1], dtype=np.int64)
    out = DecoderOutput(kinds=kinds, books=books, msgs=msgs)
    with pytest.raises(DomainError):
        out.validate_structure((4,))
