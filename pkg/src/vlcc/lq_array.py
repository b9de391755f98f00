"""Two-row word arrays: geometry, subblock types, and exact class counting.

Layout convention, derived algebraically from "the second row ends q symbols
after the first": put the reference word (length l_hat) in row 1 at absolute
positions [0, l_hat).  Row 2 holds the words x_1..x_g concatenated, ending at
l_hat - 1 + q, so row 2 starts at

    off = l_hat + q - (l^1 + ... + l^g).

Either row may start first (off < 0: row 2 first; off > 0: row 1 first).
Subblock boundaries are the word start/end positions; there are always g + 2
subblocks, where the first (length |off|) and last (length q) live in a single
row and may be empty.  An optional third row carries an output sequence
spanning exactly row 2 (requires off <= 0).
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from .errors import DomainError, ResourceBudgetError
from .types_core import (
    Distribution,
    JointDistribution,
    empirical_type,
    iter_type_class,
    joint_type,
    joint_type3,
)

DEFAULT_ENUM_BUDGET = 2**24

Block = Optional[Union[Distribution, JointDistribution]]


@dataclass(frozen=True)
class LqGeometry:
    """Lengths (l_hat; l^1..l^g) and end offset q of a two-row array."""

    l_hat: int
    lengths: tuple[int, ...]
    q: int

    def __post_init__(self):
        if self.l_hat <= 0 or any(l <= 0 for l in self.lengths) or not self.lengths:
            raise DomainError("lengths must be positive")
        if self.q < 0:
            raise DomainError("q must be non-negative")

    @property
    def g(self) -> int:
        return len(self.lengths)

    @property
    def row2_length(self) -> int:
        return sum(self.lengths)

    @property
    def row2_start_offset(self) -> int:
        return self.l_hat + self.q - self.row2_length


@dataclass(frozen=True)
class SubblockDecomposition:
    """Subblock lengths n_1..n_{g+2} plus the row-2 start offset."""

    lengths: tuple[int, ...]
    row2_start_offset: int

    @property
    def first_block_row(self) -> Optional[int]:
        if self.row2_start_offset < 0:
            return 2
        if self.row2_start_offset > 0:
            return 1
        return None


@dataclass(frozen=True)
class SubtypeSequence:
    """Per-subblock types; ``None`` marks an empty block.

    Middle blocks are joint types with axis order (first row, second row[,
    output row]); the outer blocks are one-row types (or (second row, output)
    joints when an output row is attached).
    """

    blocks: tuple[Block, ...]

    @property
    def has_output_row(self) -> bool:
        mid = self.blocks[1]
        return isinstance(mid, JointDistribution) and mid.arity == 3

    def middle(self) -> tuple[JointDistribution, ...]:
        return self.blocks[1:-1]


@dataclass(frozen=True)
class EqualityConstraintSet:
    """Declared equalities among the reference word and the row-2 words.

    ``hat_words`` lists 1-based word indices forced equal to the reference
    word; only indices 1 and g are permitted.  ``word_pairs`` holds 1-based
    (i, j) pairs with x_i = x_j.
    """

    hat_words: frozenset = frozenset()
    word_pairs: frozenset = frozenset()

    def validate(self, g: int) -> None:
        for i in self.hat_words:
            if i not in (1, g):
                raise DomainError(
                    "reference word may only equal the first or last word"
                )
        for i, j in self.word_pairs:
            if not (1 <= i <= g and 1 <= j <= g and i != j):
                raise DomainError("invalid word pair constraint")


EMPTY_CONSTRAINTS = EqualityConstraintSet()


def validate_geometry(geom: LqGeometry, require_cover: bool = False) -> list[str]:
    """Names of violated overlap inequalities (empty list means ok).

    Checks q < l^g and sum_{i=2}^g l^i - q < l_hat; with ``require_cover``
    additionally l_hat <= sum_i l^i - q (row 1 fully covered by row 2).
    """
    violations = []
    if not geom.q < geom.lengths[-1]:
        violations.append("q < l^g")
    if geom.g >= 2 and not sum(geom.lengths[1:]) - geom.q < geom.l_hat:
        violations.append("sum(l^2..l^g) - q < l_hat")
    if require_cover and not geom.l_hat <= geom.row2_length - geom.q:
        violations.append("l_hat <= sum(l^i) - q")
    return violations


def _require_valid(geom: LqGeometry, require_cover: bool = False) -> None:
    bad = validate_geometry(geom, require_cover=require_cover)
    if bad:
        raise DomainError(f"invalid (L,q) geometry: violated {bad}")


def _block_spans(geom: LqGeometry):
    """Absolute [a, b) spans of all g+2 subblocks plus word start positions."""
    off = geom.row2_start_offset
    starts = np.concatenate(([0], np.cumsum(geom.lengths))) + off
    spans = [(min(off, 0), max(off, 0))]  # first block: [off,0) or [0,off)
    for i, li in enumerate(geom.lengths):
        a = max(0, int(starts[i]))
        b = min(geom.l_hat, int(starts[i]) + li)
        spans.append((a, b))
    spans.append((geom.l_hat, geom.l_hat + geom.q))
    return spans, starts[:-1], off


def subblock_lengths(geom: LqGeometry) -> SubblockDecomposition:
    """Subblock lengths determined by the geometry (g+2 entries, n_{g+2}=q)."""
    _require_valid(geom)
    spans, _, off = _block_spans(geom)
    lengths = tuple(b - a for a, b in spans)
    if any(n <= 0 for n in lengths[1:-1]):
        raise DomainError("geometry yields an empty middle subblock")
    return SubblockDecomposition(lengths=lengths, row2_start_offset=off)


def subtype_of(
    geom: LqGeometry,
    x_hat,
    xs: Sequence,
    y=None,
    alphabet_size: Optional[int] = None,
    out_alphabet_size: Optional[int] = None,
) -> SubtypeSequence:
    """Subtype sequence of words arranged in the (L, q) array.

    With an output row ``y`` (spanning exactly row 2), the middle blocks are
    triple joints and the outer blocks are (second row, output) joints.
    """
    _require_valid(geom)
    x_hat = np.asarray(x_hat, dtype=np.int64)
    xs = [np.asarray(x, dtype=np.int64) for x in xs]
    if x_hat.size != geom.l_hat or len(xs) != geom.g:
        raise DomainError("word lengths do not match the geometry")
    for x, li in zip(xs, geom.lengths):
        if x.size != li:
            raise DomainError("word lengths do not match the geometry")
    spans, starts, off = _block_spans(geom)
    if y is not None:
        y = np.asarray(y, dtype=np.int64)
        if off > 0:
            raise DomainError("output row requires row 2 to start first (cover)")
        if y.size != geom.row2_length:
            raise DomainError("output row must span the second row exactly")
    if alphabet_size is None:
        alphabet_size = int(max(x_hat.max(), max(x.max() for x in xs))) + 1
    kx = alphabet_size
    ky = None
    if y is not None:
        ky = out_alphabet_size if out_alphabet_size is not None else int(y.max()) + 1

    blocks: list[Block] = []
    a, b = spans[0]
    if b - a == 0:
        blocks.append(None)
    elif off < 0:
        seg = xs[0][0 : b - a]
        if y is not None:
            blocks.append(joint_type(seg, y[0 : b - a], dims=(kx, ky)))
        else:
            blocks.append(empirical_type(seg, alphabet_size=kx))
    else:
        blocks.append(empirical_type(x_hat[a:b], alphabet_size=kx))

    for i in range(geom.g):
        a, b = spans[i + 1]
        top = x_hat[a:b]
        bot = xs[i][a - starts[i] : b - starts[i]]
        if y is not None:
            blocks.append(joint_type3(top, bot, y[a - off : b - off], dims=(kx, kx, ky)))
        else:
            blocks.append(joint_type(top, bot, dims=(kx, kx)))

    a, b = spans[-1]
    if b - a == 0:
        blocks.append(None)
    else:
        tail = xs[-1][geom.lengths[-1] - geom.q :]
        if y is not None:
            blocks.append(joint_type(tail, y[geom.row2_length - geom.q :], dims=(kx, ky)))
        else:
            blocks.append(empirical_type(tail, alphabet_size=kx))
    return SubtypeSequence(blocks=tuple(blocks))


def _dims_from_subtype(v: SubtypeSequence) -> tuple[int, Optional[int]]:
    mid = v.blocks[1]
    kx = mid.dims[0]
    ky = mid.dims[2] if mid.arity == 3 else None
    return kx, ky


def indicator(geom: LqGeometry, v: SubtypeSequence, x_hat, xs, y=None) -> bool:
    """True iff the arranged words (and output row) have subtype sequence v."""
    if len(v.blocks) != geom.g + 2:
        return False
    if (y is not None) != v.has_output_row:
        raise DomainError("output row presence must match the subtype sequence")
    kx, ky = _dims_from_subtype(v)
    actual = subtype_of(
        geom, x_hat, xs, y=y, alphabet_size=kx, out_alphabet_size=ky
    )
    return actual == v


def enumerate_array_class(
    geom: LqGeometry,
    v: SubtypeSequence,
    constraints: EqualityConstraintSet = EMPTY_CONSTRAINTS,
    alphabet_size: Optional[int] = None,
    budget: int = DEFAULT_ENUM_BUDGET,
) -> int:
    """Exact |T^{L,q}_{V,I}| by exhaustive enumeration of word tuples."""
    _require_valid(geom)
    constraints.validate(geom.g)
    if alphabet_size is None:
        alphabet_size, _ = _dims_from_subtype(v)
    lengths = [geom.l_hat] + list(geom.lengths)

    parent = list(range(geom.g + 1))  # node 0 = reference word, 1..g = words

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    def union(a, b):
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[rb] = ra

    for i in constraints.hat_words:
        union(0, i)
    for i, j in constraints.word_pairs:
        union(i, j)

    classes: dict[int, list[int]] = {}
    for node in range(geom.g + 1):
        classes.setdefault(find(node), []).append(node)
    for members in classes.values():
        if len({lengths[m] for m in members}) > 1:
            return 0  # equality forced between words of different lengths

    reps = sorted(classes)
    total_symbols = sum(lengths[r] for r in reps)
    if alphabet_size**total_symbols > budget:
        raise ResourceBudgetError(
            f"enumeration of {alphabet_size}**{total_symbols} tuples exceeds budget"
        )

    count = 0
    pools = [
        itertools.product(range(alphabet_size), repeat=lengths[r]) for r in reps
    ]
    for assignment in itertools.product(*pools):
        seqs = {}
        for rep, seq in zip(reps, assignment):
            arr = np.asarray(seq, dtype=np.int64)
            for member in classes[rep]:
                seqs[member] = arr
        if indicator(geom, v, seqs[0], [seqs[i] for i in range(1, geom.g + 1)]):
            count += 1
    return count


def enumerate_compatible_subtypes(
    geom: LqGeometry,
    p_hat: Distribution,
    p_words: Sequence[Distribution],
    budget: int = DEFAULT_ENUM_BUDGET,
) -> list[SubtypeSequence]:
    """Subtype sequences realizable by words of the prescribed types.

    Exhaustive witness search over the product of type classes; the result is
    exactly the family of compatible subtype sequences at this scale.
    """
    _require_valid(geom)
    if p_hat.denominator != geom.l_hat or len(p_words) != geom.g:
        raise DomainError("prescribed types do not match the geometry")
    for p, li in zip(p_words, geom.lengths):
        if p.denominator != li:
            raise DomainError("prescribed types do not match the geometry")
    from .types_core import type_class_size

    total = type_class_size(p_hat)
    for p in p_words:
        total *= type_class_size(p)
    if total > budget:
        raise ResourceBudgetError(f"{total} word tuples exceed enumeration budget")
    kx = max(p_hat.alphabet_size, max(p.alphabet_size for p in p_words))
    seen: dict[SubtypeSequence, None] = {}
    for x_hat in iter_type_class(p_hat):
        for words in itertools.product(*(iter_type_class(p) for p in p_words)):
            v = subtype_of(geom, x_hat, list(words), alphabet_size=kx)
            seen.setdefault(v, None)
    return list(seen)


def reflected_words(x_hat, xs):
    """Time-reversal of an array: reverse every word and the word order.

    A layout where row 2 starts p symbols before row 1 maps to the standard
    end-offset layout with q = p under this reflection, so the mirror-image
    case reuses the standard code path.
    """
    x_hat = np.asarray(x_hat, dtype=np.int64)
    return x_hat[::-1].copy(), [np.asarray(x, dtype=np.int64)[::-1].copy() for x in xs[::-1]]


def subtype_of_start_aligned(
    l_hat: int,
    lengths: Sequence[int],
    p: int,
    x_hat,
    xs: Sequence,
    alphabet_size: Optional[int] = None,
) -> SubtypeSequence:
    """Subtype sequence for the mirror layout (row 2 starts p before row 1).

    Computed by reflecting the inputs through the standard layout and
    reversing the resulting block order.
    """
    geom = LqGeometry(l_hat=l_hat, lengths=tuple(reversed(tuple(lengths))), q=p)
    rx, rxs = reflected_words(x_hat, xs)
    v = subtype_of(geom, rx, rxs, alphabet_size=alphabet_size)
    return SubtypeSequence(blocks=tuple(reversed(v.blocks)))
