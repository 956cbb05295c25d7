"""Distribution-free risk certificates for compression-based learning.

Implements the certificate eps_bar(k, delta, n): the unique root of
Psi_{k,delta}(eps) = 1 on [k/n, 1], where

    Psi_{k,delta}(eps) = (delta/n) * sum_{m=k}^{n-1} [C(m,k)/C(n,k)] * (1-eps)^{-(n-m)},

together with the exact binomial tail inversion used by test-set
certification, its split-conformal counterpart, and union-bound
bookkeeping. Two independent solvers are provided for eps_bar: the
production route bisects an equation written in terms of the regularized
incomplete beta function, while the oracle route bisects Psi itself in
the log of (1 - eps). Tests cross-validate one against the other.

All functions are pure; there is no shared mutable state.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "BoundQuery",
    "BoundResult",
    "ConvergenceError",
    "regularized_incomplete_beta",
    "psi_value",
    "eps_bar",
    "eps_bar_oracle",
    "binomial_tail_inversion",
    "conformal_eps",
    "union_delta",
]

# Interval width at which the bisection of the beta-function route stops,
# with a hard iteration cap guarding against NaN-poisoned comparisons.
_BISECTION_WIDTH = 1e-10
_BISECTION_MAX_ITER = 200

_ORACLE_MAX_ITER = 300
_ORACLE_RESIDUAL_TOL = 1e-6


class ConvergenceError(RuntimeError):
    """A numerical routine failed to reach its accuracy target."""


@dataclass(frozen=True)
class BoundQuery:
    """A certificate request: compression size k out of n samples at confidence 1-delta."""

    k: int
    n: int
    delta: float

    def __post_init__(self):
        if not isinstance(self.k, (int, np.integer)) or not isinstance(self.n, (int, np.integer)):
            raise TypeError("k and n must be integers")
        if self.n < 1:
            raise ValueError(f"sample size must be positive, got n={self.n}")
        if not 0 <= self.k <= self.n:
            raise ValueError(f"need 0 <= k <= n, got k={self.k}, n={self.n}")
        if not 0.0 < self.delta < 1.0:
            raise ValueError(f"delta must lie in (0, 1), got {self.delta}")


@dataclass(frozen=True)
class BoundResult:
    """Solved certificate value plus diagnostics of the solver run."""

    eps: float
    method: str  # "incomplete-beta bisection" | "direct-psi bisection" | "closed form"
    iterations: int
    residual: float


# ---------------------------------------------------------------------------
# regularized incomplete beta function
# ---------------------------------------------------------------------------


def _betacf(a: float, b: float, x: float) -> float:
    """Continued fraction for the incomplete beta function (modified Lentz)."""
    max_iter = 1000
    eps = 1e-15
    fpmin = 1e-300

    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < fpmin:
        d = fpmin
    d = 1.0 / d
    h = d
    for m in range(1, max_iter + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < fpmin:
            d = fpmin
        c = 1.0 + aa / c
        if abs(c) < fpmin:
            c = fpmin
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < fpmin:
            d = fpmin
        c = 1.0 + aa / c
        if abs(c) < fpmin:
            c = fpmin
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < eps:
            return h
    raise ConvergenceError(f"incomplete beta continued fraction stalled (a={a}, b={b}, x={x})")


def regularized_incomplete_beta(a: float, b: float, x: float) -> float:
    """I_x(a, b) via continued fraction with the symmetry switch at x > (a+1)/(a+b+2).

    The degenerate case a == 0 (all Beta mass at 0) returns 1 for x > 0,
    matching the convention of common library routines; b == 0 mirrors it.
    """
    if a < 0 or b < 0:
        raise ValueError(f"beta parameters must be nonnegative, got a={a}, b={b}")
    if not 0.0 <= x <= 1.0:
        raise ValueError(f"x must lie in [0, 1], got {x}")
    if x == 0.0:
        return 0.0 if a > 0 else 1.0
    if x == 1.0:
        return 1.0 if b > 0 else 0.0
    if a == 0:
        return 1.0
    if b == 0:
        return 0.0

    ln_front = (
        math.lgamma(a + b)
        - math.lgamma(a)
        - math.lgamma(b)
        + a * math.log(x)
        + b * math.log1p(-x)
    )
    if x < (a + 1.0) / (a + b + 2.0):
        return math.exp(ln_front) * _betacf(a, b, x) / a
    return 1.0 - math.exp(ln_front) * _betacf(b, a, 1.0 - x) / b


# ---------------------------------------------------------------------------
# Psi and its direct solver (the oracle route)
# ---------------------------------------------------------------------------


def _log_factorials(n: int) -> np.ndarray:
    """log(j!) for j = 0..n via a cumulative sum of logs."""
    out = np.zeros(n + 1)
    if n >= 1:
        out[1:] = np.cumsum(np.log(np.arange(1, n + 1, dtype=float)))
    return out


def _log_psi_of_y(k: int, n: int, delta: float, y: float, log_fact: np.ndarray) -> float:
    """log Psi_{k,delta} evaluated at eps = 1 - y, accumulated with log-sum-exp."""
    m = np.arange(k, n)
    # log of C(m,k)/C(n,k)
    log_ratio = (log_fact[m] - log_fact[m - k]) - (log_fact[n] - log_fact[n - k])
    terms = log_ratio - (n - m) * math.log(y)
    top = terms.max()
    return math.log(delta / n) + top + math.log(np.exp(terms - top).sum())


def psi_value(query: BoundQuery, eps: float) -> float:
    """Evaluate Psi_{k,delta}(eps) for 0 <= k <= n-1 and eps in (0, 1).

    Binomial ratios go through log-factorial differences and the sum is
    accumulated with log-sum-exp, so the value neither overflows for eps
    close to 1 nor underflows for large n.
    """
    if query.k >= query.n:
        raise ValueError(f"psi is defined for k <= n-1, got k={query.k}, n={query.n}")
    if not 0.0 < eps < 1.0:
        raise ValueError(f"eps must lie in (0, 1), got {eps}")
    log_fact = _log_factorials(query.n)
    return math.exp(_log_psi_of_y(query.k, query.n, query.delta, 1.0 - eps, log_fact))


def eps_bar(query: BoundQuery) -> BoundResult:
    """Risk certificate eps_bar(k, delta, n) via the incomplete-beta bisection.

    For k == n the certificate is 1 by definition. Otherwise the root of

        delta * I_t(k+1, n-k) = t * n * (I_t(k, n-k+1) - I_t(k+1, n-k))

    is bracketed on [0, 1] and bisected down to an interval of width 1e-10,
    returning the upper endpoint. The root always exists and lies in
    [k/n, 1].
    """
    k, n, delta = query.k, query.n, query.delta
    if k == n:
        return BoundResult(eps=1.0, method="closed form", iterations=0, residual=0.0)

    t1, t2 = 0.0, 1.0
    iterations = 0
    while t2 - t1 > _BISECTION_WIDTH and iterations < _BISECTION_MAX_ITER:
        t = (t1 + t2) / 2.0
        left = delta * regularized_incomplete_beta(k + 1, n - k, t)
        right = t * n * (
            regularized_incomplete_beta(k, n - k + 1, t)
            - regularized_incomplete_beta(k + 1, n - k, t)
        )
        if left > right:
            t2 = t
        else:
            t1 = t
        iterations += 1
    return BoundResult(
        eps=t2,
        method="incomplete-beta bisection",
        iterations=iterations,
        residual=t2 - t1,
    )


def eps_bar_oracle(query: BoundQuery) -> BoundResult:
    """Independent certificate solver: bisects Psi_{k,delta}(eps) = 1 directly.

    Works in u = log(1 - eps) so that roots extremely close to 1 (e.g.
    k = n-1 with small delta) are still resolved to full relative
    precision. Used as a cross-validation oracle for :func:`eps_bar`;
    raises :class:`ConvergenceError` if the residual |Psi - 1| exceeds
    1e-6 at termination, which would indicate a numerics bug.
    """
    k, n, delta = query.k, query.n, query.delta
    if k == n:
        return BoundResult(eps=1.0, method="closed form", iterations=0, residual=0.0)

    log_fact = _log_factorials(n)

    # Bracket in y = 1 - eps. Psi is decreasing in y. At y_hi = 1 - k/n
    # (i.e. eps = k/n) Psi <= 1; below y_lo the single m = n-1 term
    # already exceeds 1, so Psi > 1.
    y_hi = 1.0 - k / n
    y_lo = 0.5 * delta * (n - k) / (n * n)
    u_lo, u_hi = math.log(y_lo), math.log(y_hi)

    iterations = 0
    while u_hi - u_lo > 1e-14 and iterations < _ORACLE_MAX_ITER:
        u = 0.5 * (u_lo + u_hi)
        if _log_psi_of_y(k, n, delta, math.exp(u), log_fact) > 0.0:
            # Psi > 1: eps too small, i.e. y too small -> move lower edge up
            u_lo = u
        else:
            u_hi = u
        iterations += 1

    u = 0.5 * (u_lo + u_hi)
    residual = abs(math.exp(_log_psi_of_y(k, n, delta, math.exp(u), log_fact)) - 1.0)
    if residual > _ORACLE_RESIDUAL_TOL:
        raise ConvergenceError(
            f"psi bisection residual {residual:.3e} exceeds {_ORACLE_RESIDUAL_TOL} "
            f"for (k={k}, n={n}, delta={delta})"
        )
    return BoundResult(
        eps=1.0 - math.exp(u),
        method="direct-psi bisection",
        iterations=iterations,
        residual=residual,
    )


# ---------------------------------------------------------------------------
# binomial tail inversion (test-set route) and conformal counterpart
# ---------------------------------------------------------------------------


def _log_binom_cdf(k: int, n: int, eps: float, log_fact: np.ndarray) -> float:
    """log of sum_{j=0}^{k} C(n,j) eps^j (1-eps)^{n-j}."""
    j = np.arange(0, k + 1)
    log_terms = (
        log_fact[n]
        - log_fact[j]
        - log_fact[n - j]
        + j * math.log(eps)
        + (n - j) * math.log1p(-eps)
    )
    top = log_terms.max()
    return top + math.log(np.exp(log_terms - top).sum())


def binomial_tail_inversion(k: int, n: int, delta: float) -> float:
    """Largest failure rate consistent with k violations out of n at confidence 1-delta.

    Solves sum_{j=0}^{k} C(n,j) eps^j (1-eps)^{n-j} = delta for eps by
    bisection on the exact lower-tail binomial CDF evaluated in the log
    domain. For k == n the tail sum equals 1 for every eps, so there is
    no root below delta and 1 is returned by convention.
    """
    if n < 1:
        raise ValueError(f"n must be positive, got {n}")
    if not 0 <= k <= n:
        raise ValueError(f"need 0 <= k <= n, got k={k}, n={n}")
    if not 0.0 < delta < 1.0:
        raise ValueError(f"delta must lie in (0, 1), got {delta}")
    if k == n:
        return 1.0

    log_fact = _log_factorials(n)
    log_delta = math.log(delta)
    lo, hi = 0.0, 1.0
    while hi - lo > 1e-12:
        mid = (lo + hi) / 2.0
        if _log_binom_cdf(k, n, mid, log_fact) > log_delta:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def conformal_eps(k: int, n_cal: int, delta: float) -> float:
    """Risk bound for the k-th calibration order statistic out of n_cal scores.

    By the index substitution j -> n_cal - k this is exactly
    ``binomial_tail_inversion(n_cal - k, n_cal, delta)``, and it is
    computed through that same code path.
    """
    if not 1 <= k <= n_cal:
        raise ValueError(f"need 1 <= k <= n_cal, got k={k}, n_cal={n_cal}")
    return binomial_tail_inversion(n_cal - k, n_cal, delta)


def union_delta(delta_total: float, r: int) -> float:
    """Per-statement confidence budget when r statements share delta_total."""
    if not 0.0 < delta_total < 1.0:
        raise ValueError(f"delta_total must lie in (0, 1), got {delta_total}")
    if r < 1:
        raise ValueError(f"r must be a positive integer, got {r}")
    return delta_total / r
