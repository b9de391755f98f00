"""Streaming transmission of scheduled messages through a simulated DMC.

Sessions are finite surrogates of the paper-model's doubly infinite process:
``guard`` extra messages are prepended and appended (cyclic continuation of
the schedule) so every measured message has the decoder's full context
window.  Randomness is counter-based (Philox keyed by (seed, trial)), and a
session consumes draws in a fixed order (messages first, then channel noise
per position), so traces are reproducible under parallel trial execution.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .codebook import CodebookLibrary
from .errors import DomainError
from .exponents import ChannelMatrix

TRACE_SCHEMA = "vlcc.trace/1"


@dataclass(frozen=True)
class Schedule:
    """Finite vector of codebook indices (0-based)."""

    indices: tuple[int, ...]

    def __post_init__(self):
        if not self.indices:
            raise DomainError("schedule must be nonempty")
        if any(i < 0 for i in self.indices):
            raise DomainError("codebook indices must be non-negative")

    def __len__(self) -> int:
        return len(self.indices)

    @classmethod
    def round_robin(cls, num_books: int, messages: int) -> "Schedule":
        return cls(tuple(j % num_books for j in range(messages)))

    @classmethod
    def alternating(cls, num_books: int, messages: int) -> "Schedule":
        return cls.round_robin(num_books, messages)

    @classmethod
    def random(cls, num_books: int, messages: int, rng: np.random.Generator) -> "Schedule":
        return cls(tuple(int(i) for i in rng.integers(0, num_books, size=messages)))


@dataclass
class TransmissionTrace:
    """One finite session with ground truth for every message (guards included)."""

    schedule: np.ndarray       # full codebook index sequence, guards included
    messages: np.ndarray       # drawn message index per scheduled slot
    start_times: np.ndarray    # 0-based start position per slot
    lengths: np.ndarray        # codeword length per slot
    input_stream: np.ndarray
    output_stream: np.ndarray
    guard: int
    measured_start: int        # first measured slot index
    measured_count: int
    seed_key: tuple[int, ...]
    metadata: dict = field(default_factory=dict)

    @property
    def num_slots(self) -> int:
        return len(self.schedule)

    def measured_slots(self) -> range:
        return range(self.measured_start, self.measured_start + self.measured_count)

    def save(self, path) -> None:
        path = Path(path)
        meta = {
            "schema": TRACE_SCHEMA,
            "guard": self.guard,
            "measured_start": self.measured_start,
            "measured_count": self.measured_count,
            "seed_key": list(self.seed_key),
            "metadata": self.metadata,
        }
        path.with_suffix(".json").write_text(json.dumps(meta, sort_keys=True))
        np.savez(
            path.with_suffix(".npz"),
            schedule=self.schedule,
            messages=self.messages,
            start_times=self.start_times,
            lengths=self.lengths,
            input_stream=self.input_stream,
            output_stream=self.output_stream,
        )

    @classmethod
    def load(cls, path) -> "TransmissionTrace":
        path = Path(path)
        meta = json.loads(path.with_suffix(".json").read_text())
        if meta.get("schema") != TRACE_SCHEMA:
            raise DomainError(f"unsupported trace schema: {meta.get('schema')}")
        data = np.load(path.with_suffix(".npz"))
        return cls(
            schedule=data["schedule"],
            messages=data["messages"],
            start_times=data["start_times"],
            lengths=data["lengths"],
            input_stream=data["input_stream"],
            output_stream=data["output_stream"],
            guard=meta["guard"],
            measured_start=meta["measured_start"],
            measured_count=meta["measured_count"],
            seed_key=tuple(meta["seed_key"]),
            metadata=meta["metadata"],
        )


def session_rng(*key: int) -> np.random.Generator:
    """Counter-based generator keyed by integers (seed, trial, ...)."""
    if any(k < 0 for k in key):
        raise DomainError("seed key parts must be non-negative")
    key_words = np.random.SeedSequence(key).generate_state(2, np.uint64)
    return np.random.Generator(np.random.Philox(key=key_words))


def default_guard(d_ratio: float) -> int:
    """ceil(2/D) + 1 guard messages per side give every measured message the
    decoder's full +-(2*l_max - 2) context."""
    if not 0 < d_ratio <= 1:
        raise DomainError("D must be in (0, 1]")
    return math.ceil(2.0 / d_ratio) + 1


def draw_messages(
    lib: CodebookLibrary, schedule, rng: np.random.Generator
) -> np.ndarray:
    """Independent uniform message draws, one per scheduled slot."""
    idx = np.asarray(schedule.indices if isinstance(schedule, Schedule) else schedule)
    sizes = lib.params.sizes()
    if idx.min() < 0 or idx.max() >= lib.params.num_books:
        raise DomainError("schedule references a nonexistent codebook")
    return np.array([int(rng.integers(sizes[h])) for h in idx], dtype=np.int64)


def encode_stream(lib: CodebookLibrary, schedule, messages) -> np.ndarray:
    """Concatenation of the selected codewords in schedule order."""
    idx = np.asarray(schedule.indices if isinstance(schedule, Schedule) else schedule)
    msgs = np.asarray(messages, dtype=np.int64)
    if idx.shape != msgs.shape:
        raise DomainError("schedule and messages must align")
    sizes = lib.params.sizes()
    for h, b in zip(idx, msgs):
        if not 0 <= b < sizes[h]:
            raise DomainError("message index out of range")
    return np.concatenate([lib.books[h][b] for h, b in zip(idx, msgs)])


def transmit(w: ChannelMatrix, input_stream, rng: np.random.Generator) -> np.ndarray:
    """Memoryless per-symbol sampling from the channel rows."""
    x = np.asarray(input_stream, dtype=np.int64)
    wm = w.as_array()
    cum = np.cumsum(wm, axis=1)
    cum[:, -1] = 1.0
    out = np.empty(x.size, dtype=np.int64)
    chunk = 1 << 20
    for i in range(0, x.size, chunk):
        xs = x[i : i + chunk]
        u = rng.random(xs.size)
        out[i : i + chunk] = (u[:, None] >= cum[xs]).sum(axis=1)
    return out


def run_session(
    lib: CodebookLibrary,
    schedule,
    w: ChannelMatrix,
    seed: int,
    trial: int = 0,
    guard: Optional[int] = None,
) -> TransmissionTrace:
    """Encode, transmit and record one padded session with ground truth."""
    if guard is None:
        guard = default_guard(lib.params.D)
    if guard < 0:
        raise DomainError("guard must be non-negative")
    idx = np.asarray(schedule.indices if isinstance(schedule, Schedule) else schedule)
    j = idx.size
    prefix = idx[(np.arange(j - guard, j) % j)] if guard else idx[:0]
    suffix = idx[(np.arange(guard) % j)] if guard else idx[:0]
    full = np.concatenate([prefix, idx, suffix])

    rng = session_rng(seed, trial)
    messages = draw_messages(lib, full, rng)
    x = encode_stream(lib, full, messages)
    y = transmit(w, x, rng)

    lengths = np.array([lib.params.lengths[h] for h in full], dtype=np.int64)
    starts = np.concatenate(([0], np.cumsum(lengths[:-1])))
    return TransmissionTrace(
        schedule=full,
        messages=messages,
        start_times=starts,
        lengths=lengths,
        input_stream=x,
        output_stream=y,
        guard=guard,
        measured_start=guard,
        measured_count=j,
        seed_key=(seed, trial),
        metadata={"finite_session_surrogate": True},
    )
