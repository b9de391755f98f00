"""Codebook libraries: type-class sampling, expurgation, packing statistic.

A library holds M constant-composition codebooks; book i has length l^i, type
P^i and rate R^i, and exactly floor(2^(l^i R^i)) codewords drawn uniformly
from the expurgated type class (independent prefix/suffix in the sense of the
gamma-independence test).  Codewords are sampled on per-codeword RNG streams
keyed by (seed, book, index), so builds are reproducible regardless of
evaluation order.  Duplicate codewords within a book are allowed (pure random
coding) unless explicitly forbidden.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import product
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import DomainError, ResourceBudgetError, SamplingError
from .lq_array import LqGeometry, SubtypeSequence, subtype_of, validate_geometry
from .types_core import (
    Distribution,
    canonical_sequence,
    generalized_js,
    iter_type_class,
    mutual_information,
    type_class_size,
)

LIBRARY_SCHEMA = "vlcc.library/1"
DEFAULT_SYMBOL_BUDGET = 2**28
DEFAULT_TUPLE_BUDGET = 2**24


def gamma_default(n: int) -> float:
    """(log2 n)^(-1/2), the expurgation level used by the library builder."""
    if n < 2:
        raise DomainError("length bound must be at least 2")
    return 1.0 / math.sqrt(math.log2(n))


def default_r_min(l: int) -> int:
    """ceil((log2 l)^2): smallest prefix/suffix length tested for independence."""
    return math.ceil(math.log2(l) ** 2)


def codebook_size(l: int, rate: float) -> int:
    """floor(2^(l*rate)), computed exactly when l*rate is an integer."""
    lr = l * rate
    if float(lr).is_integer():
        return 2 ** int(round(lr))
    return int(math.floor(2.0**lr))


@dataclass(frozen=True)
class LibraryParams:
    """Shared parameters of a codebook library (lengths, types, rates)."""

    D: float
    n: int
    lengths: tuple[int, ...]
    types: tuple[Distribution, ...]
    rates: tuple[float, ...]

    def __post_init__(self):
        if not 0 < self.D <= 1:
            raise DomainError("D must be in (0, 1]")
        m = len(self.lengths)
        if m == 0 or len(self.types) != m or len(self.rates) != m:
            raise DomainError("lengths, types and rates must have equal size")
        for l, p, r in zip(self.lengths, self.types, self.rates):
            if not (self.D * self.n - 1e-9 <= l <= self.n):
                raise DomainError(f"length {l} outside [D*n, n]")
            if p.denominator != l:
                raise DomainError("each type must be an l^i-type")
            if r < 0:
                raise DomainError("rates must be non-negative")

    @property
    def num_books(self) -> int:
        return len(self.lengths)

    @property
    def max_length(self) -> int:
        return max(self.lengths)

    def sizes(self) -> tuple[int, ...]:
        return tuple(codebook_size(l, r) for l, r in zip(self.lengths, self.rates))


@dataclass
class CodebookLibrary:
    """Materialized codebooks plus build metadata; treated as immutable."""

    params: LibraryParams
    books: list[np.ndarray]  # book i: (N^i, l^i) int64
    gamma: float
    seed: int
    r_min_override: Optional[int] = None
    score: Optional[float] = None
    metadata: dict = field(default_factory=dict)

    @property
    def alphabet_size(self) -> int:
        return max(p.alphabet_size for p in self.params.types)

    def codeword(self, book: int, index: int) -> np.ndarray:
        return self.books[book][index]

    def validate(self) -> None:
        """Check declared sizes, exact composition and gamma-independence."""
        for i, book in enumerate(self.books):
            n_decl = codebook_size(self.params.lengths[i], self.params.rates[i])
            if book.shape != (n_decl, self.params.lengths[i]):
                raise DomainError(f"book {i} has wrong shape")
            counts = self.params.types[i].counts_array()
            for row in book:
                if not np.array_equal(np.bincount(row, minlength=counts.size), counts):
                    raise DomainError(f"book {i} contains an off-type codeword")
                if not is_gamma_independent(row, self.gamma, self.r_min_override):
                    raise DomainError(f"book {i} contains a dependent codeword")

    def to_json_dict(self) -> dict:
        return {
            "schema": LIBRARY_SCHEMA,
            "params": {
                "D": self.params.D,
                "n": self.params.n,
                "lengths": list(self.params.lengths),
                "type_counts": [list(p.counts) for p in self.params.types],
                "rates": list(self.params.rates),
            },
            "gamma": self.gamma,
            "seed": self.seed,
            "r_min_override": self.r_min_override,
            "score": self.score,
            "metadata": self.metadata,
            "books": [book.tolist() for book in self.books],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_json_dict(cls, doc: dict) -> "CodebookLibrary":
        if doc.get("schema") != LIBRARY_SCHEMA:
            raise DomainError(f"unsupported library schema: {doc.get('schema')}")
        p = doc["params"]
        params = LibraryParams(
            D=p["D"],
            n=p["n"],
            lengths=tuple(p["lengths"]),
            types=tuple(Distribution.from_counts(c) for c in p["type_counts"]),
            rates=tuple(p["rates"]),
        )
        return cls(
            params=params,
            books=[np.asarray(b, dtype=np.int64).reshape(-1, l)
                   for b, l in zip(doc["books"], params.lengths)],
            gamma=doc["gamma"],
            seed=doc["seed"],
            r_min_override=doc.get("r_min_override"),
            score=doc.get("score"),
            metadata=doc.get("metadata", {}),
        )

    def save(self, path) -> None:
        Path(path).write_text(self.to_json())

    @classmethod
    def load(cls, path) -> "CodebookLibrary":
        return cls.from_json_dict(json.loads(Path(path).read_text()))


def sample_uniform_type_class(p: Distribution, rng: np.random.Generator) -> np.ndarray:
    """One sequence uniform on T^l_P (a random shuffle of the exact multiset)."""
    return rng.permutation(canonical_sequence(p))


def _mi_prefix_suffix_binary(block: np.ndarray, r: int) -> np.ndarray:
    """Vectorized empirical MI of length-r prefixes vs suffixes, binary rows."""
    pre = block[:, :r]
    suf = block[:, block.shape[1] - r :]
    n11 = np.einsum("ij,ij->i", pre, suf).astype(np.float64)
    nr = pre.sum(axis=1).astype(np.float64)
    nc = suf.sum(axis=1).astype(np.float64)
    cells = np.stack([r - nr - nc + n11, nc - n11, nr - n11, n11], axis=1)
    margs = np.stack([r - nr, nr, r - nc, nc], axis=1)

    def _h(counts):
        c = np.where(counts > 0, counts, 1.0)
        return math.log2(r) - (c * np.log2(c)).sum(axis=1) / r

    h_joint = _h(cells)
    mi = _h(margs[:, :2]) + _h(margs[:, 2:]) - h_joint
    return np.maximum(mi, 0.0)


def _mi_prefix_suffix_general(block: np.ndarray, r: int, k: int) -> np.ndarray:
    from .types_core import mi_from_counts

    pre = block[:, :r]
    suf = block[:, block.shape[1] - r :]
    out = np.empty(block.shape[0])
    for i in range(block.shape[0]):
        counts = np.bincount(pre[i] * k + suf[i], minlength=k * k).reshape(k, k)
        out[i] = mi_from_counts(counts)
    return out


def gamma_independent_mask(
    block: np.ndarray, gamma: float, r_min_override: Optional[int] = None
) -> np.ndarray:
    """Row-wise gamma-independence of a batch of equal-length sequences."""
    block = np.asarray(block, dtype=np.int64)
    l = block.shape[1]
    r_min = default_r_min(l) if r_min_override is None else int(r_min_override)
    ok = np.ones(block.shape[0], dtype=bool)
    k = int(block.max()) + 1 if block.size else 2
    for r in range(r_min, l // 2 + 1):
        if not ok.any():
            break
        if k <= 2:
            mi = _mi_prefix_suffix_binary(block, r)
        else:
            mi = _mi_prefix_suffix_general(block, r, k)
        ok &= mi < gamma
    return ok


def is_gamma_independent(
    x, gamma: float, r_min_override: Optional[int] = None
) -> bool:
    """True iff every prefix/suffix pair of tested length has MI < gamma.

    Tested lengths run from r_min (default ceil((log2 l)^2)) to floor(l/2);
    vacuously true when that range is empty.
    """
    if gamma <= 0:
        raise DomainError("gamma must be positive")
    arr = np.asarray(x, dtype=np.int64).reshape(1, -1)
    return bool(gamma_independent_mask(arr, gamma, r_min_override)[0])


def sample_expurgated(
    p: Distribution,
    gamma: float,
    rng: np.random.Generator,
    max_attempts: int = 10_000,
    r_min_override: Optional[int] = None,
) -> np.ndarray:
    """Uniform sample from the gamma-independent part of T^l_P (rejection)."""
    if max_attempts < 1:
        raise DomainError("max_attempts must be at least 1")
    for attempt in range(max_attempts):
        x = sample_uniform_type_class(p, rng)
        if is_gamma_independent(x, gamma, r_min_override):
            return x
    raise SamplingError(
        f"no gamma-independent sequence in {max_attempts} attempts "
        f"(rejection rate 1.0 at gamma={gamma})"
    )


def expurgation_fraction_exact(
    p: Distribution,
    gamma: float,
    r_min_override: Optional[int] = None,
    budget: int = DEFAULT_TUPLE_BUDGET,
) -> Fraction:
    """Exact |T^l_P \\ T^l_P(gamma)| / |T^l_P| by full type-class enumeration."""
    total = type_class_size(p)
    if total > budget:
        raise ResourceBudgetError(f"type class of size {total} exceeds budget")
    block = np.stack(list(iter_type_class(p)))
    ok = gamma_independent_mask(block, gamma, r_min_override)
    return Fraction(int((~ok).sum()), total)


def build_library(
    params: LibraryParams,
    gamma: Optional[float] = None,
    seed: int = 0,
    r_min_override: Optional[int] = None,
    max_attempts: int = 10_000,
    distinct: bool = False,
    max_total_symbols: int = DEFAULT_SYMBOL_BUDGET,
    score_threshold: Optional[float] = None,
    score_retries: int = 8,
    score_budget: int = DEFAULT_TUPLE_BUDGET,
) -> CodebookLibrary:
    """Sample a full library; optionally resample until its score is small.

    Score gating evaluates the desk-scale packing score, so it is only usable
    on tiny libraries; by default no gating happens and the first draw is
    kept (the score field stays None).
    """
    if gamma is None:
        gamma = gamma_default(params.n)
    sizes = params.sizes()
    total_symbols = sum(n * l for n, l in zip(sizes, params.lengths))
    if total_symbols > max_total_symbols:
        raise ResourceBudgetError(
            f"library needs {total_symbols} codeword symbols "
            f"(books {sizes}), exceeding the budget of {max_total_symbols}"
        )

    def _build(build_seed: Sequence[int]) -> CodebookLibrary:
        books = []
        for i, (n_i, l_i) in enumerate(zip(sizes, params.lengths)):
            book = np.empty((n_i, l_i), dtype=np.int64)
            seen = set()
            for a in range(n_i):
                for retry in range(max_attempts):
                    rng = np.random.default_rng([*build_seed, i, a, retry])
                    x = sample_expurgated(
                        params.types[i], gamma, rng, max_attempts, r_min_override
                    )
                    if not distinct or x.tobytes() not in seen:
                        break
                else:
                    raise SamplingError(f"could not draw distinct codeword {a}")
                if distinct:
                    seen.add(x.tobytes())
                book[a] = x
            books.append(book)
        return CodebookLibrary(
            params=params,
            books=books,
            gamma=gamma,
            seed=seed,
            r_min_override=r_min_override,
        )

    if score_threshold is None:
        return _build([seed])
    for attempt in range(score_retries):
        lib = _build([seed, attempt])
        s = library_score(lib, budget=score_budget)
        if s <= score_threshold:
            lib.score = s
            lib.metadata["score_attempts"] = attempt + 1
            return lib
    raise SamplingError(
        f"no library with score <= {score_threshold} in {score_retries} draws"
    )


def _window_q_range(l_hat: int, lengths: Sequence[int]) -> range:
    """q values satisfying both window conditions for L = (l_hat, lengths)."""
    tail = sum(lengths[1:])
    lo = max(0, tail - l_hat + 1)
    hi = min(lengths[-1] - 1, sum(lengths) - l_hat)
    return range(lo, hi + 1)


def _index_tuples(lib: CodebookLibrary, k: Sequence[int], q: int):
    """All admissible codeword index tuples (a_hat, a_1..a_g) for (k, q)."""
    k_hat, rest = k[0], k[1:]
    sizes = lib.params.sizes()
    exclude_self = len(rest) == 1 and rest[0] == k_hat and q == 0
    for a_hat in range(sizes[k_hat]):
        for a in product(*(range(sizes[i]) for i in rest)):
            if exclude_self and a[0] == a_hat:
                continue
            yield a_hat, a


def packing_statistic(
    lib: CodebookLibrary,
    k: Sequence[int],
    q: int,
    v: SubtypeSequence,
    budget: int = DEFAULT_TUPLE_BUDGET,
) -> int:
    """Exact K^{k,q}[V]: codeword index tuples whose array has subtype v.

    The self-pair (a_hat = a_1) is excluded exactly when g = 1, k_hat = k_1
    and q = 0.
    """
    k = tuple(int(i) for i in k)
    geom = LqGeometry(
        l_hat=lib.params.lengths[k[0]],
        lengths=tuple(lib.params.lengths[i] for i in k[1:]),
        q=q,
    )
    bad = validate_geometry(geom, require_cover=True)
    if bad:
        raise DomainError(f"window conditions violated: {bad}")
    sizes = lib.params.sizes()
    total = sizes[k[0]] * math.prod(sizes[i] for i in k[1:])
    if total > budget:
        raise ResourceBudgetError(f"{total} index tuples exceed budget")
    kx = lib.alphabet_size
    count = 0
    for a_hat, a in _index_tuples(lib, k, q):
        vv = subtype_of(
            geom,
            lib.books[k[0]][a_hat],
            [lib.books[ki][ai] for ki, ai in zip(k[1:], a)],
            alphabet_size=kx,
        )
        if vv == v:
            count += 1
    return count


def packing_bound_exponent(
    k: Sequence[int], q: int, v: SubtypeSequence, params: LibraryParams
) -> float:
    """Exponent of the packing bound for index vector k, offset q, subtype v.

    -sum_i n_i I_{V_i}(X ^ Xhat) - l_hat J(V_2^Xhat..V_{g+1}^Xhat)
    + sum_i l^{k_i} R^{k_i} + l^{k_hat} R^{k_hat}.
    """
    k = tuple(int(i) for i in k)
    l_hat = params.lengths[k[0]]
    mi_term = 0.0
    hat_marginals = []
    for block in v.middle():
        mi_term += block.denominator * mutual_information(block, 0, 1)
        hat_marginals.append(block.marginal(0))
    js = generalized_js(hat_marginals)
    rate_term = l_hat * params.rates[k[0]] + sum(
        params.lengths[i] * params.rates[i] for i in k[1:]
    )
    return -mi_term - l_hat * js + rate_term


def library_score(lib: CodebookLibrary, budget: int = DEFAULT_TUPLE_BUDGET) -> float:
    """S = sum over (k, q, V) of K^{k,q}[V] * 2^(-E^{k,q}[V]).

    Groups the actual index tuples by subtype, so absent subtypes (K = 0)
    contribute nothing.  Only feasible at desk scale.
    """
    m = lib.params.num_books
    sizes = lib.params.sizes()
    max_g = math.floor(2.0 / lib.params.D) + 1
    kx = lib.alphabet_size
    total_evals = 0
    score = 0.0
    for g in range(1, max_g + 1):
        for k in product(range(m), repeat=g + 1):
            l_hat = lib.params.lengths[k[0]]
            lengths = tuple(lib.params.lengths[i] for i in k[1:])
            for q in _window_q_range(l_hat, lengths):
                geom = LqGeometry(l_hat=l_hat, lengths=lengths, q=q)
                if validate_geometry(geom, require_cover=True):
                    continue
                tuples = sizes[k[0]] * math.prod(sizes[i] for i in k[1:])
                total_evals += tuples
                if total_evals > budget:
                    raise ResourceBudgetError(
                        "library score enumeration exceeds budget"
                    )
                buckets: dict[SubtypeSequence, int] = {}
                for a_hat, a in _index_tuples(lib, k, q):
                    vv = subtype_of(
                        geom,
                        lib.books[k[0]][a_hat],
                        [lib.books[ki][ai] for ki, ai in zip(k[1:], a)],
                        alphabet_size=kx,
                    )
                    buckets[vv] = buckets.get(vv, 0) + 1
                for vv, count in buckets.items():
                    e = packing_bound_exponent(k, q, vv, lib.params)
                    score += count * 2.0 ** (-e)
    return score
