"""Channel mutual information, capacity, and random-coding error exponents.

The direct exponent route minimizes D(V_{Y|X}||W|P) + |I(P,V) - R|+ over
conditionals with the prescribed input marginal.  The positive-part kink is
handled by solving the two smooth regimes and taking the smaller value:

  * regime A: min D subject to I <= R (Lagrangian dual, bisection on the
    multiplier, closed-form multiplicative inner updates);
  * regime B: min D + I - R (alternating closed-form updates), kept only
    when its minimizer satisfies I >= R.

Both inner solvers alternate an I-projection step v_x ∝ w_x^a q^(1-a) with a
re-estimate of the output mixture q, which converges to the global optimum of
these jointly convex objectives.  The independent oracle is the classical
parametric dual max_{rho in [0,1]} E0(rho, P, W) - rho * R.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import DomainError, NumericError
from .types_core import (
    Distribution,
    JointDistribution,
    all_types,
    mutual_information,
)


@dataclass(frozen=True)
class ChannelMatrix:
    """Stochastic matrix W(y|x) with one row Distribution per input symbol."""

    rows: tuple[Distribution, ...]

    def __post_init__(self):
        if not self.rows:
            raise DomainError("channel needs at least one input symbol")
        k = self.rows[0].alphabet_size
        if any(r.alphabet_size != k for r in self.rows):
            raise DomainError("all rows must share the output alphabet")

    @classmethod
    def from_array(cls, w) -> "ChannelMatrix":
        w = np.asarray(w, dtype=np.float64)
        return cls(rows=tuple(Distribution.from_probs(row) for row in w))

    @classmethod
    def bsc(cls, eps: float) -> "ChannelMatrix":
        return cls.from_array([[1 - eps, eps], [eps, 1 - eps]])

    @classmethod
    def identity(cls, k: int) -> "ChannelMatrix":
        return cls.from_array(np.eye(k))

    @property
    def input_size(self) -> int:
        return len(self.rows)

    @property
    def output_size(self) -> int:
        return self.rows[0].alphabet_size

    def as_array(self) -> np.ndarray:
        return np.asarray([r.probs for r in self.rows], dtype=np.float64)


@dataclass(frozen=True)
class ExponentResult:
    """Exponent value in bits plus the minimizing joint (when available)."""

    value: float
    argmin_joint: Optional[JointDistribution]
    method: str


def _as_probs(p) -> np.ndarray:
    if isinstance(p, Distribution):
        return p.probs_array()
    return np.asarray(p, dtype=np.float64)


def _joint_mi(p: np.ndarray, v: np.ndarray) -> float:
    """I(P, V) in bits for input distribution p and conditional rows v."""
    joint = p[:, None] * v
    py = joint.sum(axis=0)
    mask = joint > 0
    denom = np.outer(p, py)
    return float(np.sum(joint[mask] * np.log2(joint[mask] / denom[mask])))


def _cond_div(p: np.ndarray, v: np.ndarray, w: np.ndarray) -> float:
    """D(V||W|P) in bits; +inf when v leaves w's support on a used row."""
    total = 0.0
    for x in range(p.size):
        if p[x] <= 0:
            continue
        mask = v[x] > 0
        if np.any(w[x][mask] <= 0):
            return math.inf
        total += p[x] * float(np.dot(v[x][mask], np.log2(v[x][mask] / w[x][mask])))
    return total


def channel_mi(p, w: ChannelMatrix) -> float:
    """I(P, W) in bits."""
    pp = _as_probs(p)
    wm = w.as_array()
    if pp.size != w.input_size:
        raise DomainError("input distribution does not match the channel")
    return max(0.0, _joint_mi(pp, wm))


def capacity(
    w: ChannelMatrix, tol: float = 1e-9, max_iter: int = 200_000
) -> tuple[float, Distribution]:
    """Capacity via alternating maximization with a certified gap < tol.

    Returns the achievable lower bound I(q, W) once the standard upper bound
    max_x D(W_x || qW) is within tol of it.
    """
    if tol <= 0:
        raise DomainError("tol must be positive")
    wm = w.as_array()
    m = w.input_size
    q = np.full(m, 1.0 / m)
    for _ in range(max_iter):
        out = q @ wm
        d = np.zeros(m)
        for x in range(m):
            mask = wm[x] > 0
            d[x] = float(np.dot(wm[x][mask], np.log2(wm[x][mask] / out[mask])))
        upper = float(d.max())
        lower = float(np.dot(q, d))
        if upper - lower < tol:
            return lower, Distribution.from_probs(q / q.sum())
        q = q * np.exp2(d)
        q /= q.sum()
    raise NumericError("capacity iteration did not converge")


def _tilted_alternating(
    p: np.ndarray,
    w: np.ndarray,
    lam: float,
    v0: Optional[np.ndarray] = None,
    iters: int = 20000,
    tol: float = 1e-15,
) -> np.ndarray:
    """Minimize D(V||W|P) + lam * I(P,V) by alternating closed-form updates.

    Given the output mixture q the optimal rows are v_x ∝ w_x^a q^(1-a) with
    a = 1/(1+lam); given V the optimal mixture is the output marginal.  The
    iteration is run on q and stopped on its fixed-point residual.
    """
    support = w > 0
    wa = np.where(support, w ** (1.0 / (1.0 + lam)), 0.0)
    a1 = lam / (1.0 + lam)
    if v0 is None:
        q = p @ w
    else:
        q = p @ v0
    for _ in range(iters):
        v = wa * np.maximum(q, 0.0)[None, :] ** a1
        norm = v.sum(axis=1, keepdims=True)
        v = np.divide(v, norm, out=np.zeros_like(v), where=norm > 0)
        q_new = p @ v
        if np.abs(q_new - q).max() < tol:
            q = q_new
            break
        q = q_new
    v = wa * np.maximum(q, 0.0)[None, :] ** a1
    norm = v.sum(axis=1, keepdims=True)
    return np.divide(v, norm, out=np.zeros_like(v), where=norm > 0)


def _min_div_under_mi_cap(
    p: np.ndarray, w: np.ndarray, cap: float, tol: float
) -> tuple[float, Optional[np.ndarray]]:
    """min D(V||W|P) over V with I(P,V) <= cap; (+inf, None) if infeasible."""
    if _joint_mi(p, w) <= cap + 1e-15:
        return 0.0, w.copy()
    lam_lo, lam_hi = 0.0, 1.0
    v = w
    for _ in range(80):
        v = _tilted_alternating(p, w, lam_hi, v0=v)
        if _joint_mi(p, v) <= cap:
            break
        lam_hi *= 2.0
        if lam_hi > 1e12:
            return math.inf, None
    v_feas = v
    for _ in range(200):
        lam = 0.5 * (lam_lo + lam_hi)
        v = _tilted_alternating(p, w, lam, v0=v)
        if _joint_mi(p, v) <= cap:
            lam_hi, v_feas = lam, v
        else:
            lam_lo = lam
        if lam_hi - lam_lo < tol * max(1.0, lam_hi):
            break
    return _cond_div(p, v_feas, w), v_feas


def _exponent_objective(p: np.ndarray, w: np.ndarray, v: np.ndarray, r: float) -> float:
    return _cond_div(p, v, w) + max(0.0, _joint_mi(p, v) - r)


def random_coding_exponent(
    r: float, p, w: ChannelMatrix, tol: float = 1e-10
) -> ExponentResult:
    """min_V { D(V_{Y|X}||W|P) + |I(P,V) - R|+ } with V_X = P, in bits.

    The positive part is resolved exactly through the minimax identity
    min_V max_{theta in [0,1]} [D + theta*(I - R)]: the concave scalar
    function theta -> min_V (D + theta*I) - theta*R is maximized by golden
    section, each inner problem solved by the tilted alternating updates.
    The reported value is the true objective at the best primal witness.
    """
    if r < 0:
        raise DomainError("rate must be non-negative")
    pp = _as_probs(p)
    wm = w.as_array()

    best_v = wm
    best_f = _exponent_objective(pp, wm, wm, r)
    cache: dict[float, float] = {}
    warm = {"v": wm}

    def g(theta: float) -> float:
        nonlocal best_v, best_f
        if theta in cache:
            return cache[theta]
        v = _tilted_alternating(pp, wm, theta, v0=warm["v"])
        warm["v"] = v
        f_here = _exponent_objective(pp, wm, v, r)
        if f_here < best_f:
            best_f, best_v = f_here, v
        val = _cond_div(pp, v, wm) + theta * (_joint_mi(pp, v) - r)
        cache[theta] = val
        return val

    phi = (math.sqrt(5.0) - 1.0) / 2.0
    lo, hi = 0.0, 1.0
    g(0.0)
    g(1.0)
    x1 = hi - phi * (hi - lo)
    x2 = lo + phi * (hi - lo)
    f1, f2 = g(x1), g(x2)
    while hi - lo > tol:
        if f1 < f2:
            lo, x1, f1 = x1, x2, f2
            x2 = lo + phi * (hi - lo)
            f2 = g(x2)
        else:
            hi, x2, f2 = x2, x1, f1
            x1 = hi - phi * (hi - lo)
            f1 = g(x1)
    joint = JointDistribution.from_probs(pp[:, None] * best_v)
    return ExponentResult(value=max(0.0, best_f), argmin_joint=joint, method="direct")


def gallager_e0(rho: float, p, w: ChannelMatrix) -> float:
    """iid-ensemble E0: -log2 sum_y (sum_x P(x) W(y|x)^(1/(1+rho)))^(1+rho).

    Lower-bounds the constant-composition E0 of ``gallager_e0_cc``; the two
    coincide at the exponent-maximizing input distribution, so this cheap
    form drives the continuous input search.
    """
    pp = _as_probs(p)
    wm = w.as_array()
    inner = pp @ wm ** (1.0 / (1.0 + rho))
    return float(-np.log2(np.sum(inner ** (1.0 + rho))))


def gallager_e0_cc(
    rho: float, p, w: ChannelMatrix, q0: Optional[np.ndarray] = None,
    iters: int = 20000, tol: float = 1e-14,
) -> tuple[float, np.ndarray]:
    """Constant-composition E0 in dual form, with the minimizing output law.

    E0cc(rho,P,W) = min_q -(1+rho) sum_x P(x) log2 sum_y W(y|x)^(1/(1+rho))
    q(y)^(rho/(1+rho)), a convex minimization over output distributions,
    solved by exponentiated-gradient descent with backtracking.
    """
    pp = _as_probs(p)
    wm = w.as_array()
    if rho <= 0:
        return 0.0, pp @ wm
    a = 1.0 / (1.0 + rho)
    b = rho / (1.0 + rho)
    wa = wm**a
    reach = (pp @ wm) > 0
    q = (pp @ wm if q0 is None else np.asarray(q0, dtype=np.float64)).copy()
    q = np.where(reach, np.maximum(q, 1e-300), 0.0)
    q /= q.sum()
    ln2 = math.log(2.0)

    def phi(qv: np.ndarray) -> float:
        z = wa @ np.where(reach, qv, 0.0) ** b
        mask = pp > 0
        return float(-(1.0 + rho) * np.dot(pp[mask], np.log2(z[mask])))

    cur = phi(q)
    step = 1.0
    for _ in range(iters):
        z = wa @ q**b
        grad = np.zeros_like(q)
        m = q > 0
        grad[m] = -(1.0 + rho) / ln2 * b * (pp / z) @ wa[:, m] * q[m] ** (b - 1.0)
        scale = np.abs(grad).max() + 1e-300
        improved = False
        for _ in range(50):
            cand = q * np.exp(-step * grad / scale)
            cand /= cand.sum()
            val = phi(cand)
            if val <= cur:
                improved = True
                break
            step *= 0.5
        if not improved:
            break
        if cur - val < tol and np.abs(cand - q).max() < 1e-12:
            q, cur = cand, val
            break
        q, cur = cand, val
        step = min(step * 1.5, 64.0)
    return cur, q


def random_coding_exponent_gallager(
    r: float, p, w: ChannelMatrix, tol: float = 1e-10
) -> ExponentResult:
    """max_{rho in [0,1]} E0cc(rho,P,W) - rho*R by golden-section search.

    Uses the constant-composition E0 (dual over output distributions), the
    parametric form matching the fixed-composition exponent for every input
    law, not only the optimal one.  The objective is concave in rho; no
    witness joint is produced on this route.
    """
    if r < 0:
        raise DomainError("rate must be non-negative")
    warm: dict[str, Optional[np.ndarray]] = {"q": None}

    def f(rho: float) -> float:
        val, q = gallager_e0_cc(rho, p, w, q0=warm["q"])
        warm["q"] = q
        return val - rho * r

    phi = (math.sqrt(5.0) - 1.0) / 2.0
    lo, hi = 0.0, 1.0
    x1 = hi - phi * (hi - lo)
    x2 = lo + phi * (hi - lo)
    f1, f2 = f(x1), f(x2)
    while hi - lo > tol:
        if f1 < f2:
            lo, x1, f1 = x1, x2, f2
            x2 = lo + phi * (hi - lo)
            f2 = f(x2)
        else:
            hi, x2, f2 = x2, x1, f1
            x1 = hi - phi * (hi - lo)
            f1 = f(x1)
    best = max(f(lo), f(hi), f1, f2, f(0.0), f(1.0))
    return ExponentResult(value=max(0.0, best), argmin_joint=None, method="gallager")


def threshold_exponent(
    r: float, p, w: ChannelMatrix, eta: float, tol: float = 1e-9
) -> float:
    """min D(V||W|P) over V with V_X = P and I(P,V) - R <= eta (bits).

    Returns +inf when no conditional inside W's support meets the mutual
    information cap.
    """
    if eta < 0:
        raise DomainError("eta must be non-negative")
    pp = _as_probs(p)
    wm = w.as_array()
    value, _ = _min_div_under_mi_cap(pp, wm, r + eta, tol=1e-13)
    return value


def eta_default(n: int) -> float:
    """1 / log2(n): the decoder threshold used at length bound n."""
    if n < 2:
        raise DomainError("length bound must be at least 2")
    return 1.0 / math.log2(n)


@dataclass(frozen=True)
class OptimalTypeResult:
    """Best l-type for a rate plus the continuous optimum it approximates."""

    best_type: Distribution
    value: float
    continuous_probs: tuple[float, ...]
    continuous_value: float


def _max_e0_over_inputs(
    rho: float, w: ChannelMatrix, p0: Optional[np.ndarray] = None, iters: int = 2000
) -> tuple[float, np.ndarray]:
    """max_P E0(rho, P, W) via exponentiated gradient on the convex surrogate."""
    wm = w.as_array()
    m = w.input_size
    f = wm ** (1.0 / (1.0 + rho))
    p = np.full(m, 1.0 / m) if p0 is None else p0.copy()

    def surrogate(pv):
        return float(np.sum((pv @ f) ** (1.0 + rho)))

    cur = surrogate(p)
    step = 1.0
    for _ in range(iters):
        inner = p @ f
        grad = (1.0 + rho) * (f @ inner**rho)
        scale = np.abs(grad).max() + 1e-300
        for _ in range(40):
            cand = p * np.exp(-step * grad / scale)
            cand /= cand.sum()
            val = surrogate(cand)
            if val <= cur + 1e-18:
                break
            step *= 0.5
        if abs(cur - val) < 1e-16 and np.abs(cand - p).max() < 1e-13:
            p = cand
            cur = val
            break
        p, cur = cand, val
        step = min(step * 1.3, 64.0)
    return float(-np.log2(cur)), p


def _round_to_type(p: np.ndarray, l: int) -> Distribution:
    """Nearest l-type by the largest-remainder rule."""
    scaled = p * l
    base = np.floor(scaled).astype(np.int64)
    short = l - int(base.sum())
    order = np.argsort(-(scaled - base))
    base[order[:short]] += 1
    return Distribution.from_counts(base)


def optimal_type_for_rate(
    l: int,
    r: float,
    w: ChannelMatrix,
    type_budget: int = 200_000,
    rho_points: int = 33,
) -> OptimalTypeResult:
    """Maximize the random-coding exponent over l-types on the input alphabet.

    Reports both the continuous optimum (max over all input distributions)
    and the best l-type; when the number of l-types exceeds the budget the
    discrete search is restricted to rounded neighbors of the continuous
    optimizer.
    """
    m = w.input_size
    best_val, best_p = -math.inf, None
    p_warm = None
    rho_grid = np.linspace(0.0, 1.0, rho_points)
    per_rho: list[tuple[float, float, np.ndarray]] = []
    for rho in rho_grid:
        e0, p_warm = _max_e0_over_inputs(rho, w, p0=p_warm)
        per_rho.append((rho, e0 - rho * r, p_warm))
        if per_rho[-1][1] > best_val:
            best_val, best_p = per_rho[-1][1], p_warm
    # refine around the best grid point
    idx = int(np.argmax([v for _, v, _ in per_rho]))
    lo = per_rho[max(0, idx - 1)][0]
    hi = per_rho[min(len(per_rho) - 1, idx + 1)][0]
    for rho in np.linspace(lo, hi, 17):
        e0, p_here = _max_e0_over_inputs(rho, w, p0=best_p)
        if e0 - rho * r > best_val:
            best_val, best_p = e0 - rho * r, p_here
    continuous_value = max(0.0, best_val)

    def type_value(t: Distribution) -> float:
        return random_coding_exponent_gallager(r, t, w).value

    num_types = math.comb(l + m - 1, m - 1)
    if num_types <= type_budget:
        cands = list(all_types(l, m))
    else:
        base = _round_to_type(best_p, l)
        cands = [base]
        counts = base.counts_array()
        for i in range(m):
            for j in range(m):
                if i != j and counts[j] > 0:
                    c = counts.copy()
                    c[i] += 1
                    c[j] -= 1
                    cands.append(Distribution.from_counts(c))
    best_type = max(cands, key=type_value)
    return OptimalTypeResult(
        best_type=best_type,
        value=type_value(best_type),
        continuous_probs=tuple(float(x) for x in best_p),
        continuous_value=continuous_value,
    )
