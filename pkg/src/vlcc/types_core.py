"""Finite-alphabet distributions, empirical types, and information measures.

All logarithms are base 2, so entropies, mutual informations and divergences
are in bits.  Conventions: 0*log(0) = 0 and p*log(p/0) = +inf for p > 0.

Empirical types are stored as exact integer count vectors together with their
denominator (the sequence length); real-valued probabilities are derived from
the counts.  This keeps enumeration oracles exact: two types are equal iff
their count vectors are equal.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterator, Optional, Sequence

import numpy as np

from .errors import DomainError

PROB_SUM_TOL = 1e-12
COUNT_INT_TOL = 1e-9
FLOAT_TOL = 1e-9


def _as_symbols(seq) -> np.ndarray:
    arr = np.asarray(seq, dtype=np.int64)
    if arr.ndim != 1:
        raise DomainError("symbol sequence must be one-dimensional")
    return arr


def _infer_alphabet(arr: np.ndarray, alphabet_size: Optional[int]) -> int:
    if alphabet_size is not None:
        if arr.size and (arr.min() < 0 or arr.max() >= alphabet_size):
            raise DomainError("symbol out of range for declared alphabet")
        return int(alphabet_size)
    if arr.size == 0:
        raise DomainError("cannot infer alphabet from an empty sequence")
    if arr.min() < 0:
        raise DomainError("symbols must be non-negative integers")
    return int(arr.max()) + 1


def _entropy_from_counts(counts: np.ndarray, total: int) -> float:
    """log2(n) - (1/n) * sum c*log2(c), exact for integer counts."""
    if total == 0:
        return 0.0
    c = counts[counts > 0].astype(np.float64)
    return float(np.log2(total) - np.dot(c, np.log2(c)) / total)


def _entropy_from_probs(probs: np.ndarray) -> float:
    p = probs[probs > 0]
    return float(-np.dot(p, np.log2(p)))


@dataclass(frozen=True)
class Distribution:
    """Probability vector over the alphabet {0, ..., alphabet_size-1}.

    ``denominator`` and ``counts`` are present iff this is an n-type, i.e.
    every probability is a multiple of 1/denominator.
    """

    alphabet_size: int
    probs: tuple[float, ...]
    denominator: Optional[int] = None
    counts: Optional[tuple[int, ...]] = None

    def __post_init__(self):
        if self.alphabet_size != len(self.probs):
            raise DomainError("alphabet_size does not match probs length")
        if any(p < -PROB_SUM_TOL for p in self.probs):
            raise DomainError("negative probability")
        if abs(sum(self.probs) - 1.0) > PROB_SUM_TOL:
            raise DomainError("probabilities do not sum to 1")
        if (self.denominator is None) != (self.counts is None):
            raise DomainError("denominator and counts must be given together")
        if self.denominator is not None:
            if self.denominator <= 0:
                raise DomainError("denominator must be positive")
            if len(self.counts) != self.alphabet_size:
                raise DomainError("counts length mismatch")
            if sum(self.counts) != self.denominator:
                raise DomainError("counts do not sum to the denominator")
            for p, c in zip(self.probs, self.counts):
                if abs(p * self.denominator - c) > COUNT_INT_TOL:
                    raise DomainError("probs are not multiples of 1/denominator")

    @classmethod
    def from_probs(cls, probs: Sequence[float]) -> "Distribution":
        probs = tuple(float(p) for p in probs)
        return cls(alphabet_size=len(probs), probs=probs)

    @classmethod
    def from_counts(cls, counts: Sequence[int]) -> "Distribution":
        counts = tuple(int(c) for c in counts)
        if any(c < 0 for c in counts):
            raise DomainError("negative count")
        n = sum(counts)
        if n <= 0:
            raise DomainError("counts must sum to a positive length")
        probs = tuple(c / n for c in counts)
        return cls(alphabet_size=len(counts), probs=probs, denominator=n, counts=counts)

    @property
    def is_type(self) -> bool:
        return self.denominator is not None

    def probs_array(self) -> np.ndarray:
        return np.asarray(self.probs, dtype=np.float64)

    def counts_array(self) -> np.ndarray:
        if self.counts is None:
            raise DomainError("distribution is not an n-type")
        return np.asarray(self.counts, dtype=np.int64)


@dataclass(frozen=True)
class JointDistribution:
    """Joint distribution over 2 or 3 finite alphabets, stored flat in C order."""

    arity: int
    dims: tuple[int, ...]
    probs: tuple[float, ...]
    denominator: Optional[int] = None
    counts: Optional[tuple[int, ...]] = None

    def __post_init__(self):
        if self.arity not in (2, 3):
            raise DomainError("arity must be 2 or 3")
        if len(self.dims) != self.arity:
            raise DomainError("dims length must equal arity")
        size = math.prod(self.dims)
        if len(self.probs) != size:
            raise DomainError("probs length does not match dims")
        if abs(sum(self.probs) - 1.0) > PROB_SUM_TOL:
            raise DomainError("probabilities do not sum to 1")
        if (self.denominator is None) != (self.counts is None):
            raise DomainError("denominator and counts must be given together")
        if self.counts is not None and sum(self.counts) != self.denominator:
            raise DomainError("counts do not sum to the denominator")

    @classmethod
    def from_counts(cls, counts: np.ndarray) -> "JointDistribution":
        counts = np.asarray(counts, dtype=np.int64)
        n = int(counts.sum())
        if n <= 0:
            raise DomainError("counts must sum to a positive length")
        probs = (counts / n).ravel()
        return cls(
            arity=counts.ndim,
            dims=tuple(counts.shape),
            probs=tuple(float(p) for p in probs),
            denominator=n,
            counts=tuple(int(c) for c in counts.ravel()),
        )

    @classmethod
    def from_probs(cls, probs: np.ndarray) -> "JointDistribution":
        probs = np.asarray(probs, dtype=np.float64)
        return cls(
            arity=probs.ndim,
            dims=tuple(probs.shape),
            probs=tuple(float(p) for p in probs.ravel()),
        )

    @property
    def is_type(self) -> bool:
        return self.denominator is not None

    def probs_array(self) -> np.ndarray:
        return np.asarray(self.probs, dtype=np.float64).reshape(self.dims)

    def counts_array(self) -> np.ndarray:
        if self.counts is None:
            raise DomainError("joint distribution is not an n-type")
        return np.asarray(self.counts, dtype=np.int64).reshape(self.dims)

    def marginal(self, axis: int) -> Distribution:
        """Marginal along one axis; preserves exact counts for types."""
        axes = tuple(a for a in range(self.arity) if a != axis)
        if self.counts is not None:
            return Distribution.from_counts(self.counts_array().sum(axis=axes))
        return Distribution.from_probs(self.probs_array().sum(axis=axes))

    def pair_marginal(self, axis_a: int, axis_b: int) -> "JointDistribution":
        if self.arity == 2:
            if (axis_a, axis_b) != (0, 1):
                raise DomainError("pair marginal of a bivariate joint must be (0, 1)")
            return self
        other = 3 - axis_a - axis_b
        if self.counts is not None:
            c = np.moveaxis(self.counts_array(), other, 2).sum(axis=2)
            return JointDistribution.from_counts(c)
        p = np.moveaxis(self.probs_array(), other, 2).sum(axis=2)
        return JointDistribution.from_probs(p)


@dataclass(frozen=True)
class SecondOrderType:
    """Joint type of a sequence with its one-step shift, plus the first symbol."""

    base: JointDistribution
    first_symbol: int
    length: int

    def __post_init__(self):
        if self.base.arity != 2 or self.base.dims[0] != self.base.dims[1]:
            raise DomainError("second-order base must be a square bivariate joint")
        if self.base.denominator != self.length - 1:
            raise DomainError("second-order denominator must be length - 1")
        # Adjacent-pair consistency: row sums count x_1..x_{n-1}, column sums
        # count x_2..x_n, so e_first - (rows - cols) must be the unit vector
        # of the last symbol.
        c = self.base.counts_array()
        last = c.sum(axis=0) - c.sum(axis=1)
        last[self.first_symbol] += 1
        if last.min() < 0 or last.sum() != 1:
            raise DomainError("inconsistent adjacent-pair counts")


def empirical_type(seq, alphabet_size: Optional[int] = None) -> Distribution:
    """Relative-frequency type of a sequence; denominator = len(seq)."""
    arr = _as_symbols(seq)
    if arr.size == 0:
        raise DomainError("empty sequence has no type")
    k = _infer_alphabet(arr, alphabet_size)
    return Distribution.from_counts(np.bincount(arr, minlength=k))


def joint_type(x, y, dims: Optional[tuple[int, int]] = None) -> JointDistribution:
    """Joint type of two equal-length sequences."""
    xa, ya = _as_symbols(x), _as_symbols(y)
    if xa.size != ya.size:
        raise DomainError("joint type requires equal lengths")
    if xa.size == 0:
        raise DomainError("empty sequences have no joint type")
    kx = _infer_alphabet(xa, dims[0] if dims else None)
    ky = _infer_alphabet(ya, dims[1] if dims else None)
    counts = np.bincount(xa * ky + ya, minlength=kx * ky).reshape(kx, ky)
    return JointDistribution.from_counts(counts)


def joint_type3(x, y, z, dims: Optional[tuple[int, int, int]] = None) -> JointDistribution:
    """Joint type of three equal-length sequences."""
    xa, ya, za = _as_symbols(x), _as_symbols(y), _as_symbols(z)
    if not (xa.size == ya.size == za.size):
        raise DomainError("joint type requires equal lengths")
    if xa.size == 0:
        raise DomainError("empty sequences have no joint type")
    kx = _infer_alphabet(xa, dims[0] if dims else None)
    ky = _infer_alphabet(ya, dims[1] if dims else None)
    kz = _infer_alphabet(za, dims[2] if dims else None)
    counts = np.bincount((xa * ky + ya) * kz + za, minlength=kx * ky * kz)
    return JointDistribution.from_counts(counts.reshape(kx, ky, kz))


def entropy(d) -> float:
    """Entropy in bits of a Distribution or JointDistribution."""
    if isinstance(d, (Distribution, JointDistribution)):
        if d.counts is not None:
            return _entropy_from_counts(
                np.asarray(d.counts, dtype=np.int64), d.denominator
            )
        return _entropy_from_probs(np.asarray(d.probs, dtype=np.float64))
    return _entropy_from_probs(np.asarray(d, dtype=np.float64).ravel())


def conditional_entropy(v: JointDistribution, target_axis: int, given_axes) -> float:
    """H(target | given) = H(target, given) - H(given), in bits."""
    given = tuple(given_axes) if not isinstance(given_axes, int) else (given_axes,)
    if not given:
        raise DomainError("given_axes must be nonempty")
    axes = (target_axis,) + given
    if len(set(axes)) != len(axes) or any(a < 0 or a >= v.arity for a in axes):
        raise DomainError("invalid axis specification")
    p = v.probs_array()
    drop = tuple(a for a in range(v.arity) if a not in axes)
    p_joint = p.sum(axis=drop) if drop else p
    p_given = p.sum(axis=tuple(a for a in range(v.arity) if a not in given))
    return _entropy_from_probs(p_joint.ravel()) - _entropy_from_probs(p_given.ravel())


def mutual_information(v: JointDistribution, axis_a: int = 0, axis_b: int = 1) -> float:
    """I(A; B) = H(A) + H(B) - H(A,B), in bits; third axis marginalized out."""
    if axis_a == axis_b:
        raise DomainError("mutual information needs two distinct axes")
    pair = v.pair_marginal(axis_a, axis_b)
    ha = entropy(pair.marginal(0))
    hb = entropy(pair.marginal(1))
    hab = entropy(pair)
    return max(0.0, ha + hb - hab)


def empirical_mi(x, y, dims: Optional[tuple[int, int]] = None) -> float:
    """Empirical mutual information of two equal-length sequences, in bits."""
    return mutual_information(joint_type(x, y, dims=dims))


def mi_from_counts(counts: np.ndarray) -> float:
    """Mutual information of an integer joint-count table, in bits."""
    counts = np.asarray(counts, dtype=np.int64)
    n = int(counts.sum())
    ha = _entropy_from_counts(counts.sum(axis=1), n)
    hb = _entropy_from_counts(counts.sum(axis=0), n)
    hab = _entropy_from_counts(counts.ravel(), n)
    return max(0.0, ha + hb - hab)


def conditional_divergence(v_cond, w, p) -> float:
    """D(V || W | P) = sum_x P(x) sum_y V(y|x) log2(V(y|x)/W(y|x)).

    Returns +inf when some x with P(x) > 0 has V(y|x) > 0 but W(y|x) = 0.
    """
    v = np.asarray(v_cond, dtype=np.float64)
    wm = np.asarray(w, dtype=np.float64)
    pp = p.probs_array() if isinstance(p, Distribution) else np.asarray(p, dtype=np.float64)
    if v.shape != wm.shape or v.shape[0] != pp.size:
        raise DomainError("shape mismatch between channels and input distribution")
    total = 0.0
    for x in range(pp.size):
        if pp[x] <= 0:
            continue
        vx, wx = v[x], wm[x]
        mask = vx > 0
        if np.any(wx[mask] <= 0):
            return math.inf
        total += pp[x] * float(np.dot(vx[mask], np.log2(vx[mask] / wx[mask])))
    return max(0.0, total)


def concat_types(parts: Sequence[Optional[Distribution]]) -> Distribution:
    """Length-weighted concatenation of n-types (exact, via counts).

    ``None`` entries mark zero-length parts and contribute nothing.
    """
    real = [p for p in parts if p is not None]
    if not real:
        raise DomainError("concatenation needs at least one nonempty part")
    k = real[0].alphabet_size
    if any(p.alphabet_size != k for p in real):
        raise DomainError("concatenation parts must share an alphabet")
    if any(not p.is_type for p in real):
        raise DomainError("concatenation parts must be n-types")
    total = np.zeros(k, dtype=np.int64)
    for p in real:
        total += p.counts_array()
    return Distribution.from_counts(total)


def concat_joint_types(parts: Sequence[Optional[JointDistribution]]) -> JointDistribution:
    """Concatenation of joint types via exact count addition."""
    real = [p for p in parts if p is not None]
    if not real:
        raise DomainError("concatenation needs at least one nonempty part")
    dims = real[0].dims
    if any(p.dims != dims for p in real):
        raise DomainError("concatenation parts must share dims")
    if any(not p.is_type for p in real):
        raise DomainError("concatenation parts must be types")
    total = np.zeros(dims, dtype=np.int64)
    for p in real:
        total += p.counts_array()
    return JointDistribution.from_counts(total)


def generalized_js(
    parts: Sequence[Distribution], lengths: Optional[Sequence[int]] = None
) -> float:
    """Generalized Jensen-Shannon divergence of weighted parts, in bits.

    J(V_1,...,V_k) = H(mixture) - sum_i (n_i / n) H(V_i), weights n_i given
    explicitly or taken from each part's denominator.  Nonnegative; zero iff
    all parts are equal.
    """
    if not parts:
        raise DomainError("generalized JS needs at least one part")
    if lengths is None:
        if any(not p.is_type for p in parts):
            raise DomainError("parts without denominators need explicit lengths")
        lengths = [p.denominator for p in parts]
    lengths = [int(n) for n in lengths]
    if len(lengths) != len(parts) or any(n <= 0 for n in lengths):
        raise DomainError("lengths must be positive and match parts")
    k = parts[0].alphabet_size
    if any(p.alphabet_size != k for p in parts):
        raise DomainError("parts must share an alphabet")
    n = sum(lengths)
    exact = all(p.is_type and p.denominator == ni for p, ni in zip(parts, lengths))
    if exact:
        # integer-count mixture keeps J at exactly 0 for identical parts
        mix_counts = np.zeros(k, dtype=np.int64)
        for p in parts:
            mix_counts += p.counts_array()
        h_mix = _entropy_from_counts(mix_counts, n)
    else:
        mix = np.zeros(k, dtype=np.float64)
        for p, ni in zip(parts, lengths):
            mix += (ni / n) * p.probs_array()
        h_mix = _entropy_from_probs(mix)
    avg_h = sum((ni / n) * entropy(p) for p, ni in zip(parts, lengths))
    return max(0.0, h_mix - avg_h)


def second_order_type(seq, alphabet_size: Optional[int] = None) -> SecondOrderType:
    """Joint type of (x_1..x_{n-1}, x_2..x_n) with the first symbol recorded."""
    arr = _as_symbols(seq)
    if arr.size < 2:
        raise DomainError("second-order type needs length >= 2")
    k = _infer_alphabet(arr, alphabet_size)
    base = joint_type(arr[:-1], arr[1:], dims=(k, k))
    return SecondOrderType(base=base, first_symbol=int(arr[0]), length=int(arr.size))


def type_class_size(p: Distribution) -> int:
    """|T^n_P| as an exact integer (multinomial coefficient)."""
    if not p.is_type:
        raise DomainError("type_class_size needs an n-type")
    n = p.denominator
    size = math.factorial(n)
    for c in p.counts:
        size //= math.factorial(c)
    return size


def channel_string_probability(w, x, y) -> float:
    """prod_i W(y_i | x_i) for a memoryless channel matrix W."""
    wm = np.asarray(w, dtype=np.float64)
    xa, ya = _as_symbols(x), _as_symbols(y)
    if xa.size != ya.size:
        raise DomainError("input and output lengths differ")
    return float(np.prod(wm[xa, ya]))


def all_types(n: int, alphabet_size: int) -> Iterator[Distribution]:
    """All n-types on an alphabet of the given size (compositions of n)."""
    if n <= 0 or alphabet_size <= 0:
        raise DomainError("n and alphabet_size must be positive")

    def compositions(total: int, k: int):
        if k == 1:
            yield (total,)
            return
        for first in range(total + 1):
            for rest in compositions(total - first, k - 1):
                yield (first,) + rest

    for c in compositions(n, alphabet_size):
        yield Distribution.from_counts(c)


def canonical_sequence(p: Distribution) -> np.ndarray:
    """The sorted representative sequence of an n-type."""
    return np.repeat(np.arange(p.alphabet_size, dtype=np.int64), p.counts_array())


def iter_type_class(p: Distribution) -> Iterator[np.ndarray]:
    """All sequences of type P (distinct permutations of its multiset)."""
    if not p.is_type:
        raise DomainError("iter_type_class needs an n-type")
    counts = list(p.counts)
    n = p.denominator
    buf = np.empty(n, dtype=np.int64)

    def rec(pos: int):
        if pos == n:
            yield buf.copy()
            return
        for sym in range(len(counts)):
            if counts[sym] > 0:
                counts[sym] -= 1
                buf[pos] = sym
                yield from rec(pos + 1)
                counts[sym] += 1

    yield from rec(0)


def exact_type_fraction(numer: int, denom: int) -> Fraction:
    """Exact rational helper used by enumeration oracles."""
    return Fraction(numer, denom)
