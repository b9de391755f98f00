"""Two-stage sequential universal decoder over a codebook library.

Stage 1 at instance t looks for the unique maximizer over all (book, message)
pairs of the window metric l^h * (I(x_b^h ^ y_t..y_{t+l^h-1}) - R^h).  Stage 2
accepts the candidate iff its unnormalized score exceeds the threshold,
(I - R) > eta, and the stage-1 maximum strictly beats every overlapping
window: all (h, b) at offsets d in [t-l^h+1, t-1] and (t, t+l^cand-1].  On
acceptance the decoder emits the pair followed by l-1 spaces and jumps past
the window; otherwise it emits an erasure and advances one instance.

"Uniquely" and "strictly" are resolved with a tie tolerance so floating-point
behavior is deterministic.  All comparisons reference the raw output stream,
never previously committed decodes.

The binary fast path exploits that for fixed marginals the window MI depends
only on the overlap count n11 and is convex in it, so per-offset per-book
metric maxima need only the column min/max of one integer-valued matmul; the
count -> metric table is shared with the scalar routines, making the fast
engine bit-identical to the reference implementation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .channel_sim import TransmissionTrace
from .codebook import CodebookLibrary
from .errors import DomainError
from .exponents import eta_default
from .types_core import mi_from_counts

ERASURE, SPACE, PAIR = 0, 1, 2


@dataclass(frozen=True)
class DecoderConfig:
    """Threshold eta (bits) and the tolerance used for tie/strictness tests."""

    eta: float
    tie_tolerance: float = 1e-12

    def __post_init__(self):
        if self.eta < 0 or self.tie_tolerance < 0:
            raise DomainError("eta and tie_tolerance must be non-negative")


def default_config(lib: CodebookLibrary) -> DecoderConfig:
    return DecoderConfig(eta=eta_default(lib.params.n))


@dataclass
class DecoderOutput:
    """Per-instance decoder symbols: a pair, the space '-', or an erasure."""

    kinds: np.ndarray  # int8, ERASURE/SPACE/PAIR
    books: np.ndarray  # int32, -1 unless PAIR
    msgs: np.ndarray   # int64, -1 unless PAIR

    def __len__(self) -> int:
        return self.kinds.size

    def validate_structure(self, lengths) -> None:
        """Every pair must be followed by exactly l^h - 1 spaces."""
        lengths = np.asarray(lengths)
        t = 0
        n = len(self)
        while t < n:
            if self.kinds[t] == PAIR:
                l = int(lengths[self.books[t]])
                seg = self.kinds[t + 1 : t + l]
                if seg.size != l - 1 or not np.all(seg == SPACE):
                    raise DomainError(f"pair at {t} not followed by {l-1} spaces")
                if t + l < n and self.kinds[t + l] == SPACE:
                    raise DomainError(f"stray space at {t + l}")
                t += l
            elif self.kinds[t] == SPACE:
                raise DomainError(f"space at {t} without a preceding pair")
            else:
                t += 1

    def to_tokens(self) -> str:
        out = []
        for t in range(len(self)):
            if self.kinds[t] == PAIR:
                out.append(f"{self.books[t]}:{self.msgs[t]}")
            elif self.kinds[t] == SPACE:
                out.append("-")
            else:
                out.append("e")
        return ",".join(out)

    @classmethod
    def from_tokens(cls, text: str) -> "DecoderOutput":
        toks = text.split(",") if text else []
        n = len(toks)
        kinds = np.zeros(n, dtype=np.int8)
        books = np.full(n, -1, dtype=np.int32)
        msgs = np.full(n, -1, dtype=np.int64)
        for t, tok in enumerate(toks):
            if tok == "e":
                kinds[t] = ERASURE
            elif tok == "-":
                kinds[t] = SPACE
            else:
                h, b = tok.split(":")
                kinds[t] = PAIR
                books[t] = int(h)
                msgs[t] = int(b)
        return cls(kinds=kinds, books=books, msgs=msgs)


def window_metric(lib: CodebookLibrary, h: int, b: int, y, t: int) -> float:
    """l^h * (I(x_b^h ^ window) - R^h) for the window starting at t (0-based)."""
    y = np.asarray(y, dtype=np.int64)
    l = lib.params.lengths[h]
    if t < 0 or t + l > y.size:
        raise DomainError("window out of bounds")
    x = lib.books[h][b]
    win = y[t : t + l]
    kx = max(lib.alphabet_size, int(x.max()) + 1)
    ky = max(int(win.max()) + 1, 2)
    counts = np.bincount(x * ky + win, minlength=kx * ky).reshape(kx, ky)
    return l * (mi_from_counts(counts) - lib.params.rates[h])


@lru_cache(maxsize=128)
def _metric_table(l: int, c1: int, rate: float) -> np.ndarray:
    """metric[m1, n11] for binary windows; invalid count cells hold NaN."""
    table = np.full((l + 1, l + 1), np.nan)
    for m1 in range(l + 1):
        lo = max(0, c1 + m1 - l)
        hi = min(c1, m1)
        for n11 in range(lo, hi + 1):
            counts = np.array(
                [[l - c1 - m1 + n11, m1 - n11], [c1 - n11, n11]], dtype=np.int64
            )
            table[m1, n11] = l * (mi_from_counts(counts) - rate)
    return table


class _TableEngine:
    """Per-offset metric maxima for binary alphabets via one sgemm per chunk."""

    def __init__(self, lib: CodebookLibrary, y: np.ndarray, chunk_elems: int = 1 << 25):
        self.lib = lib
        self.T = y.size
        self.lengths = lib.params.lengths
        y1 = (y == 1).astype(np.float32)
        cum = np.concatenate(([0], np.cumsum(y == 1, dtype=np.int64)))
        self.x1 = []
        self.tables = []
        self.winsum = []
        self.chunk = []
        self.cache: list[dict[int, np.ndarray]] = []
        self.y1 = y1
        for h in range(lib.params.num_books):
            l = self.lengths[h]
            book = lib.books[h]
            self.x1.append((book == 1).astype(np.float32))
            c1 = int(lib.params.types[h].counts[1]) if lib.params.types[h].alphabet_size > 1 else 0
            self.tables.append(_metric_table(l, c1, lib.params.rates[h]))
            self.winsum.append(cum[l:] - cum[:-l])
            self.chunk.append(max(64, chunk_elems // max(1, book.shape[0])))
            self.cache.append({})

    def _chunk_values(self, h: int, ci: int) -> np.ndarray:
        cache = self.cache[h]
        if ci in cache:
            return cache[ci]
        l = self.lengths[h]
        step = self.chunk[h]
        d0 = ci * step
        d1 = min(d0 + step, self.T - l + 1)
        block = np.ascontiguousarray(sliding_window_view(self.y1, l)[d0:d1])
        n11 = self.x1[h] @ block.T
        lo = n11.min(axis=0).astype(np.int64)
        hi = n11.max(axis=0).astype(np.int64)
        m1 = self.winsum[h][d0:d1]
        tab = self.tables[h]
        vals = np.maximum(tab[m1, lo], tab[m1, hi])
        cache[ci] = vals
        return vals

    def advance(self, t: int) -> None:
        """Drop cached chunks entirely below t - l_max (no longer reachable)."""
        for h in range(len(self.cache)):
            step = self.chunk[h]
            floor_ci = (t - self.lib.params.max_length) // step - 1
            stale = [ci for ci in self.cache[h] if ci < floor_ci]
            for ci in stale:
                del self.cache[h][ci]

    def book_max_in_range(self, h: int, lo: int, hi: int) -> float:
        """max over offsets d in [lo, hi] of max_b metric(h, b, d)."""
        l = self.lengths[h]
        lo = max(lo, 0)
        hi = min(hi, self.T - l)
        if lo > hi:
            return -math.inf
        step = self.chunk[h]
        best = -math.inf
        ci = lo // step
        while ci * step <= hi:
            vals = self._chunk_values(h, ci)
            a = max(lo - ci * step, 0)
            b = min(hi - ci * step + 1, vals.size)
            if a < b:
                best = max(best, float(vals[a:b].max()))
            ci += 1
        return best

    def threshold_ceiling(self, t: int) -> float:
        """max over fitting books of (max_b metric)/l^h; -inf if none fit."""
        best = -math.inf
        for h in range(len(self.lengths)):
            l = self.lengths[h]
            if t + l > self.T:
                continue
            best = max(best, self.book_max_in_range(h, t, t) / l)
        return best

    def point_query(self, t: int):
        """Exact global top pair and runner-up value at offset t."""
        top_val = -math.inf
        top_pair = None
        second = -math.inf
        for h in range(len(self.lengths)):
            l = self.lengths[h]
            if t + l > self.T:
                continue
            w1 = self.y1[t : t + l]
            n11 = (self.x1[h] @ w1).astype(np.int64)
            m1 = int(self.winsum[h][t])
            vals = self.tables[h][m1, n11]
            i = int(np.argmax(vals))
            v1 = float(vals[i])
            if vals.size > 1:
                tmp = vals[i]
                vals[i] = -math.inf
                v2 = float(vals.max())
                vals[i] = tmp
            else:
                v2 = -math.inf
            if v1 > top_val:
                second = max(top_val, v2)
                top_val, top_pair = v1, (h, i)
            else:
                second = max(second, v1)
        if top_pair is None:
            return None
        return top_val, top_pair, second


class _ReferenceEngine:
    """Brute-force engine for any alphabet; used by tests and small decodes."""

    def __init__(self, lib: CodebookLibrary, y: np.ndarray):
        self.lib = lib
        self.y = np.asarray(y, dtype=np.int64)
        self.T = self.y.size
        self.lengths = lib.params.lengths
        self._maxcache: list[dict[int, float]] = [dict() for _ in lib.books]

    def _metrics_at(self, h: int, d: int) -> np.ndarray:
        return np.array(
            [window_metric(self.lib, h, b, self.y, d) for b in range(len(self.lib.books[h]))]
        )

    def advance(self, t: int) -> None:
        pass

    def book_max_in_range(self, h: int, lo: int, hi: int) -> float:
        l = self.lengths[h]
        lo = max(lo, 0)
        hi = min(hi, self.T - l)
        best = -math.inf
        for d in range(lo, hi + 1):
            if d not in self._maxcache[h]:
                self._maxcache[h][d] = float(self._metrics_at(h, d).max())
            best = max(best, self._maxcache[h][d])
        return best

    def threshold_ceiling(self, t: int) -> float:
        best = -math.inf
        for h in range(len(self.lengths)):
            if t + self.lengths[h] > self.T:
                continue
            best = max(best, self.book_max_in_range(h, t, t) / self.lengths[h])
        return best

    def point_query(self, t: int):
        top_val = -math.inf
        top_pair = None
        second = -math.inf
        for h in range(len(self.lengths)):
            if t + self.lengths[h] > self.T:
                continue
            vals = self._metrics_at(h, t)
            i = int(np.argmax(vals))
            v1 = float(vals[i])
            v2 = float(np.delete(vals, i).max()) if vals.size > 1 else -math.inf
            if v1 > top_val:
                second = max(top_val, v2)
                top_val, top_pair = v1, (h, i)
            else:
                second = max(second, v1)
        if top_pair is None:
            return None
        return top_val, top_pair, second


def _make_engine(lib: CodebookLibrary, y: np.ndarray, engine: str):
    if engine == "reference":
        return _ReferenceEngine(lib, y)
    binary = lib.alphabet_size <= 2 and (y.size == 0 or y.max() <= 1)
    if engine == "table":
        if not binary:
            raise DomainError("table engine requires binary alphabets")
        return _TableEngine(lib, y)
    return _TableEngine(lib, y) if binary else _ReferenceEngine(lib, y)


@dataclass(frozen=True)
class Stage1Result:
    unique: bool
    book: int
    msg: int
    metric: float
    runner_up: float


def stage1(lib: CodebookLibrary, y, t: int, cfg: DecoderConfig) -> Optional[Stage1Result]:
    """Global metric maximizer at t; ``unique`` is False on a tie."""
    q = _make_engine(lib, np.asarray(y, dtype=np.int64), "auto").point_query(t)
    if q is None:
        return None
    m1, (h, b), m2 = q
    return Stage1Result(
        unique=(m1 - m2 > cfg.tie_tolerance), book=h, msg=b, metric=m1, runner_up=m2
    )


def stage2(
    lib: CodebookLibrary, y, t: int, candidate: Stage1Result, cfg: DecoderConfig
) -> bool:
    """Threshold plus strict dominance over all overlapping windows."""
    eng = _make_engine(lib, np.asarray(y, dtype=np.int64), "auto")
    return _stage2_with_engine(lib, eng, t, candidate, cfg)


def _stage2_with_engine(lib, eng, t, candidate: Stage1Result, cfg) -> bool:
    l_cand = lib.params.lengths[candidate.book]
    if not (candidate.metric / l_cand > cfg.eta):
        return False
    bar = candidate.metric - cfg.tie_tolerance
    for h in range(lib.params.num_books):
        l_h = lib.params.lengths[h]
        if eng.book_max_in_range(h, t - l_h + 1, t - 1) >= bar:
            return False
        if eng.book_max_in_range(h, t + 1, t + l_cand - 1) >= bar:
            return False
    return True


def decode_stream(
    lib: CodebookLibrary, y, cfg: Optional[DecoderConfig] = None, engine: str = "auto"
) -> DecoderOutput:
    """Sequential scan: accept-and-jump or emit an erasure and advance by one."""
    if cfg is None:
        cfg = default_config(lib)
    y = np.asarray(y, dtype=np.int64)
    T = y.size
    eng = _make_engine(lib, y, engine)
    kinds = np.zeros(T, dtype=np.int8)
    books = np.full(T, -1, dtype=np.int32)
    msgs = np.full(T, -1, dtype=np.int64)
    t = 0
    while t < T:
        eng.advance(t)
        # cheap sound prefilter: if no book can clear the threshold at t, the
        # candidate (whatever it is) fails stage 2's threshold -> erasure.
        if eng.threshold_ceiling(t) <= cfg.eta:
            t += 1
            continue
        q = eng.point_query(t)
        if q is None:
            t += 1
            continue
        m1, (h, b), m2 = q
        cand = Stage1Result(unique=(m1 - m2 > cfg.tie_tolerance), book=h, msg=b,
                            metric=m1, runner_up=m2)
        if not cand.unique or not _stage2_with_engine(lib, eng, t, cand, cfg):
            t += 1
            continue
        l = lib.params.lengths[h]
        kinds[t] = PAIR
        books[t] = h
        msgs[t] = b
        kinds[t + 1 : t + l] = SPACE
        t += l
    return DecoderOutput(kinds=kinds, books=books, msgs=msgs)


def decode_trace(
    lib: CodebookLibrary, trace: TransmissionTrace, cfg: Optional[DecoderConfig] = None,
    engine: str = "auto",
) -> DecoderOutput:
    return decode_stream(lib, trace.output_stream, cfg=cfg, engine=engine)


@dataclass(frozen=True)
class MessageOutcome:
    slot: int
    book: int
    message: int
    correct: bool
    erasure_run: bool
    edf_event: bool
    label: str  # correct | error | erasure-run | mixed


@dataclass
class BookTally:
    messages: int = 0
    errors: int = 0
    erasure_runs: int = 0
    edf_events: int = 0


@dataclass
class ScoreSummary:
    outcomes: list[MessageOutcome]
    per_book: dict[int, BookTally]

    def error_rate(self, book: int) -> float:
        t = self.per_book[book]
        return t.errors / t.messages if t.messages else 0.0

    def erasure_run_rate(self, book: int) -> float:
        t = self.per_book[book]
        return t.erasure_runs / t.messages if t.messages else 0.0


def score_messages(trace: TransmissionTrace, out: DecoderOutput) -> ScoreSummary:
    """Per-message outcomes over the measured (non-guard) slots.

    A message is correct iff the decoder output equals its (book, message)
    pair at the start instance and space for the rest of its window; an
    erasure run has every instance erased; an erasure-detection-failure event
    is any non-erasure instance inside the window.
    """
    if len(out) != trace.output_stream.size:
        raise DomainError("decoder output does not align with the trace")
    outcomes = []
    per_book: dict[int, BookTally] = {}
    for j in trace.measured_slots():
        h = int(trace.schedule[j])
        b = int(trace.messages[j])
        s = int(trace.start_times[j])
        l = int(trace.lengths[j])
        span = slice(s, s + l)
        correct = (
            out.kinds[s] == PAIR
            and out.books[s] == h
            and out.msgs[s] == b
            and bool(np.all(out.kinds[s + 1 : s + l] == SPACE))
        )
        erasure_run = bool(np.all(out.kinds[span] == ERASURE))
        edf_event = not erasure_run
        if correct:
            label = "correct"
        elif erasure_run:
            label = "erasure-run"
        elif np.any(out.kinds[span] == PAIR):
            label = "error"
        else:
            label = "mixed"
        if erasure_run and (correct or edf_event):
            raise DomainError("inconsistent scoring: erasure run with activity")
        outcomes.append(
            MessageOutcome(
                slot=j, book=h, message=b, correct=correct,
                erasure_run=erasure_run, edf_event=edf_event, label=label,
            )
        )
        tally = per_book.setdefault(h, BookTally())
        tally.messages += 1
        tally.errors += 0 if correct else 1
        tally.erasure_runs += 1 if erasure_run else 0
        tally.edf_events += 1 if edf_event else 0
    return ScoreSummary(outcomes=outcomes, per_book=per_book)


def classify_error_event(
    trace: TransmissionTrace,
    out: DecoderOutput,
    lib: CodebookLibrary,
    j: int,
    cfg: DecoderConfig,
) -> list[str]:
    """Event classes explaining why measured message j was not decoded.

    Labels: "threshold" (the sent codeword missed the threshold), and for
    each competitor position, "same-position", "wrong-codebook", or
    "misposition" when some codeword's window metric matches or beats the
    sent one.  Events may overlap; the full multiset is returned.
    """
    y = trace.output_stream
    h_j = int(trace.schedule[j])
    s = int(trace.start_times[j])
    l = int(trace.lengths[j])
    base = window_metric(lib, h_j, int(trace.messages[j]), y, s)
    labels = []
    if base / l <= cfg.eta:
        labels.append("threshold")
    for k_hat in range(lib.params.num_books):
        l_k = lib.params.lengths[k_hat]
        for d in range(max(0, s - l_k + 1), min(s + l, y.size - l_k + 1)):
            vals = np.array(
                [window_metric(lib, k_hat, a, y, d) for a in range(len(lib.books[k_hat]))]
            )
            if k_hat == h_j and d == s:
                vals[int(trace.messages[j])] = -math.inf
            if vals.size and float(vals.max()) >= base:
                if d == s:
                    labels.append("same-position" if k_hat == h_j else "wrong-codebook")
                else:
                    labels.append("misposition")
    return labels
