"""Data-driven reachable-set estimation with empirical inverse Christoffel functions.

Given terminal states of a stochastic system, a sublevel set of the
empirical inverse Christoffel function

    level(x) = v(x)^T M^{-1} v(x),   M = (1/n) * sum_i v(z_i) v(z_i)^T,

serves as the reachable-set estimate, where v stacks all monomials up to a
chosen degree and the threshold is the maximum level over the training
points. :func:`reach_p2l` wraps the fit in the pick-to-learn loop so the
set comes with a distribution-free coverage certificate.

The benchmark dynamics are a periodically forced Duffing oscillator,
integrated with classical fixed-step RK4 (numba-accelerated over batches
of initial states).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import product
from typing import Callable

import numpy as np

from .bounds import BoundQuery, eps_bar
from .core import CompressionResult, Dataset, run_p2l

__all__ = [
    "MonomialBasis",
    "ChristoffelModel",
    "DuffingConfig",
    "ReachResult",
    "SingularMomentMatrixError",
    "VolumeEstimate",
    "monomial_vector",
    "fit_christoffel",
    "christoffel_level",
    "contains",
    "volume_mc",
    "duffing_terminal",
    "reach_p2l",
    "estimate_risk",
]

# Relative eigenvalue threshold below which an unridged moment matrix is
# declared singular (|T| too small or degenerate geometry).
_SINGULAR_RATIO = 1e-12


class SingularMomentMatrixError(RuntimeError):
    """Moment matrix is numerically singular and no ridge was requested."""


@dataclass(frozen=True)
class MonomialBasis:
    """All monomials on R^{n_x} of total degree <= d, in a fixed graded order.

    Within each total degree, pure powers come first (x1^g, x2^g, ...),
    followed by mixed monomials ordered lexicographically by descending
    exponent tuple; the constant monomial is entry 0.
    """

    n_x: int
    d: int
    exponents: tuple[tuple[int, ...], ...]

    @classmethod
    def create(cls, n_x: int, d: int) -> "MonomialBasis":
        if n_x < 1 or d < 0:
            raise ValueError(f"invalid basis parameters n_x={n_x}, d={d}")
        exps = [e for e in product(range(d + 1), repeat=n_x) if sum(e) <= d]
        exps.sort(key=lambda e: (sum(e), sum(1 for v in e if v > 0), tuple(-v for v in e)))
        basis = cls(n_x=n_x, d=d, exponents=tuple(tuple(e) for e in exps))
        assert basis.size == math.comb(n_x + d, d)
        return basis

    @property
    def size(self) -> int:
        return len(self.exponents)


def monomial_vector(x: np.ndarray, basis: MonomialBasis) -> np.ndarray:
    """Evaluate every basis monomial at a single point."""
    x = np.asarray(x, dtype=float)
    if x.shape != (basis.n_x,):
        raise ValueError(f"expected a vector of length {basis.n_x}, got shape {x.shape}")
    return _monomial_matrix(x[None, :], basis)[0]


def _monomial_matrix(points: np.ndarray, basis: MonomialBasis) -> np.ndarray:
    """(n_points, basis.size) Vandermonde-style matrix."""
    exps = np.asarray(basis.exponents)  # (size, n_x)
    # per-variable power tables keep this O(n d) rather than O(n size)
    cols = np.ones((points.shape[0], basis.size))
    for j in range(basis.n_x):
        powers = points[:, j][:, None] ** np.arange(basis.d + 1)[None, :]
        cols *= powers[:, exps[:, j]]
    return cols


@dataclass(frozen=True)
class ChristoffelModel:
    """Fitted inverse Christoffel function and its sublevel threshold.

    ``factor`` holds Q diag(1/sqrt(lambda)) from the eigendecomposition of
    the (standardized) moment matrix, so level(x) = ||factor^T v(y)||^2
    with y the internally standardized coordinates; the inverse matrix is
    never formed. Points with level(x) <= alpha are inside the set,
    boundary included.
    """

    basis: MonomialBasis
    shift: np.ndarray
    scale: np.ndarray
    factor: np.ndarray
    alpha: float
    condition_estimate: float
    ridge: float
    n_train: int


def fit_christoffel(train: np.ndarray, basis: MonomialBasis, ridge: float = 0.0) -> ChristoffelModel:
    """Fit the empirical inverse Christoffel function on the training points.

    Coordinates are affinely standardized before the monomials are built;
    the fitted level function is mathematically unchanged by this (it is
    invariant under any invertible affine reparameterization that the
    basis spans) but the moment-matrix spectrum becomes tractable at high
    degree. ``ridge`` is a relative regularizer: a diagonal shift of
    ``ridge * trace(M) / size`` is added to the moment matrix. With
    ridge = 0 a singular fit raises :class:`SingularMomentMatrixError`.

    The threshold alpha is the maximum level over the training points, so
    every training point is contained in the resulting set.
    """
    train = np.atleast_2d(np.asarray(train, dtype=float))
    if train.shape[0] < 1 or train.shape[1] != basis.n_x:
        raise ValueError(f"bad training array of shape {train.shape} for n_x={basis.n_x}")

    shift = train.mean(axis=0)
    scale = train.std(axis=0)
    scale = np.where(scale > 0, scale, 1.0)

    v = _monomial_matrix((train - shift) / scale, basis)
    moment = v.T @ v / train.shape[0]
    if ridge > 0.0:
        moment = moment + (ridge * np.trace(moment) / basis.size) * np.eye(basis.size)

    evals, evecs = np.linalg.eigh(moment)
    if evals[0] <= _SINGULAR_RATIO * evals[-1]:
        if ridge == 0.0:
            raise SingularMomentMatrixError(
                f"moment matrix is singular (eig ratio {evals[0] / evals[-1]:.2e}); "
                f"|T|={train.shape[0]} may be too small for basis size {basis.size}, "
                "or the data lie on a degenerate manifold; consider a ridge"
            )
        evals = np.maximum(evals, _SINGULAR_RATIO * evals[-1])

    factor = evecs / np.sqrt(evals)
    half = v @ factor
    levels = np.einsum("ij,ij->i", half, half)
    return ChristoffelModel(
        basis=basis,
        shift=shift,
        scale=scale,
        factor=factor,
        alpha=float(levels.max()),
        condition_estimate=float(evals[-1] / evals[0]),
        ridge=ridge,
        n_train=train.shape[0],
    )


def christoffel_level(model: ChristoffelModel, points: np.ndarray) -> np.ndarray:
    """Evaluate the fitted inverse Christoffel function at the given points."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    v = _monomial_matrix((points - model.shift) / model.scale, model.basis)
    half = v @ model.factor
    return np.einsum("ij,ij->i", half, half)


def contains(model: ChristoffelModel, z: np.ndarray) -> np.ndarray | bool:
    """Sublevel-set membership; a point exactly on the boundary counts as inside."""
    z = np.asarray(z, dtype=float)
    single = z.ndim == 1
    inside = christoffel_level(model, z) <= model.alpha
    return bool(inside[0]) if single else inside


@dataclass(frozen=True)
class VolumeEstimate:
    value: float
    stderr: float
    hits: int
    n_samples: int


def volume_mc(
    model: ChristoffelModel,
    box: tuple[np.ndarray, np.ndarray],
    n_samples: int,
    seed: int | np.random.Generator,
) -> VolumeEstimate:
    """Monte-Carlo volume of the sublevel set inside an axis-aligned box.

    The box must enclose the region of interest (callers assert it covers
    the training data with margin); the estimate is hit-rate times box
    volume with the usual binomial standard error.
    """
    lo, hi = (np.asarray(b, dtype=float) for b in box)
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    samples = rng.uniform(lo, hi, size=(n_samples, lo.size))
    inside = christoffel_level(model, samples) <= model.alpha
    hits = int(inside.sum())
    box_vol = float(np.prod(hi - lo))
    p = hits / n_samples
    return VolumeEstimate(
        value=p * box_vol,
        stderr=math.sqrt(max(p * (1.0 - p), 0.0) / n_samples) * box_vol,
        hits=hits,
        n_samples=n_samples,
    )


# ---------------------------------------------------------------------------
# Duffing oscillator benchmark dynamics
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DuffingConfig:
    """Forced Duffing oscillator x1' = x2, x2' = x1(1 - x1^2) - a*x2 + g*cos(w t)."""

    alpha_damping: float = 0.05
    gamma_forcing: float = 0.4
    omega: float = 1.3
    t0: float = 0.0
    t1: float = 100.0
    dt: float = 0.01

    def __post_init__(self):
        if self.dt <= 0 or self.t1 <= self.t0:
            raise ValueError("need dt > 0 and t1 > t0")

    @property
    def n_steps(self) -> int:
        return int(round((self.t1 - self.t0) / self.dt))


def _cos_table(cfg: DuffingConfig) -> np.ndarray:
    # forcing term sampled at half-step resolution for the RK4 stages
    j = np.arange(2 * cfg.n_steps + 1)
    return np.cos(cfg.omega * (cfg.t0 + 0.5 * cfg.dt * j))


def _rk4_batch_numpy(x0s, dt, n_steps, alpha, gamma, cos_tab):
    x1 = x0s[:, 0].copy()
    x2 = x0s[:, 1].copy()
    for s in range(n_steps):
        c0, ch, c1 = cos_tab[2 * s], cos_tab[2 * s + 1], cos_tab[2 * s + 2]
        k1a = x2
        k1b = x1 * (1.0 - x1 * x1) - alpha * x2 + gamma * c0
        y1 = x1 + 0.5 * dt * k1a
        y2 = x2 + 0.5 * dt * k1b
        k2a = y2
        k2b = y1 * (1.0 - y1 * y1) - alpha * y2 + gamma * ch
        y1 = x1 + 0.5 * dt * k2a
        y2 = x2 + 0.5 * dt * k2b
        k3a = y2
        k3b = y1 * (1.0 - y1 * y1) - alpha * y2 + gamma * ch
        y1 = x1 + dt * k3a
        y2 = x2 + dt * k3b
        k4a = y2
        k4b = y1 * (1.0 - y1 * y1) - alpha * y2 + gamma * c1
        x1 = x1 + dt * (k1a + 2.0 * k2a + 2.0 * k3a + k4a) / 6.0
        x2 = x2 + dt * (k1b + 2.0 * k2b + 2.0 * k3b + k4b) / 6.0
    return np.stack([x1, x2], axis=1)


try:  # numba kernel; identical arithmetic per trajectory, parallel over the batch
    import numba

    @numba.njit(parallel=True, cache=True)
    def _rk4_batch_numba(x0s, dt, n_steps, alpha, gamma, cos_tab):  # pragma: no cover
        n = x0s.shape[0]
        out = np.empty_like(x0s)
        for i in numba.prange(n):
            x1 = x0s[i, 0]
            x2 = x0s[i, 1]
            for s in range(n_steps):
                c0 = cos_tab[2 * s]
                ch = cos_tab[2 * s + 1]
                c1 = cos_tab[2 * s + 2]
                k1a = x2
                k1b = x1 * (1.0 - x1 * x1) - alpha * x2 + gamma * c0
                y1 = x1 + 0.5 * dt * k1a
                y2 = x2 + 0.5 * dt * k1b
                k2a = y2
                k2b = y1 * (1.0 - y1 * y1) - alpha * y2 + gamma * ch
                y1 = x1 + 0.5 * dt * k2a
                y2 = x2 + 0.5 * dt * k2b
                k3a = y2
                k3b = y1 * (1.0 - y1 * y1) - alpha * y2 + gamma * ch
                y1 = x1 + dt * k3a
                y2 = x2 + dt * k3b
                k4a = y2
                k4b = y1 * (1.0 - y1 * y1) - alpha * y2 + gamma * c1
                x1 = x1 + dt * (k1a + 2.0 * k2a + 2.0 * k3a + k4a) / 6.0
                x2 = x2 + dt * (k1b + 2.0 * k2b + 2.0 * k3b + k4b) / 6.0
            out[i, 0] = x1
            out[i, 1] = x2
        return out

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    _HAVE_NUMBA = False


def duffing_terminal(x0: np.ndarray, cfg: DuffingConfig) -> np.ndarray:
    """Terminal state(s) at t1 from initial state(s) at t0 via fixed-step RK4.

    Accepts a single state of shape (2,) or a batch of shape (n, 2). The
    per-trajectory arithmetic is identical in the numba and numpy paths,
    so results do not depend on the backend or on thread count.
    """
    x0 = np.asarray(x0, dtype=float)
    single = x0.ndim == 1
    batch = np.atleast_2d(x0)
    if batch.shape[1] != 2:
        raise ValueError(f"expected 2-d states, got shape {x0.shape}")

    cos_tab = _cos_table(cfg)
    if _HAVE_NUMBA:
        out = _rk4_batch_numba(
            np.ascontiguousarray(batch), cfg.dt, cfg.n_steps,
            cfg.alpha_damping, cfg.gamma_forcing, cos_tab,
        )
    else:
        out = _rk4_batch_numpy(
            batch, cfg.dt, cfg.n_steps, cfg.alpha_damping, cfg.gamma_forcing, cos_tab
        )

    if not np.isfinite(out).all():
        bad = np.where(~np.isfinite(out).all(axis=1))[0]
        raise FloatingPointError(
            f"integration diverged for {bad.size} initial state(s), first at index "
            f"{bad[0]} with x0={batch[bad[0]]}; reduce dt or check the configuration"
        )
    return out[0] if single else out


# ---------------------------------------------------------------------------
# pick-to-learn instantiation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ReachResult:
    model: ChristoffelModel
    compression: CompressionResult
    eps: float


def reach_p2l(data: Dataset, d: int, delta: float, ridge: float = 0.0) -> ReachResult:
    """Certified reachable set via pick-to-learn over Christoffel sublevel sets.

    The synthesizer refits the model on the initialization points plus the
    current training list; membership is the certified property and the
    level value itself ranks the violators. The returned certificate is
    eps_bar(|T|, delta, n_working).
    """
    points = np.asarray(data.points, dtype=float)
    basis = MonomialBasis.create(points.shape[1], d)
    init = points[: data.n_init]
    if data.n_init < 1:
        raise ValueError("reach_p2l needs at least one initialization point to fit from")

    def synth(train_points: list) -> ChristoffelModel:
        stacked = np.vstack([init, np.asarray(train_points)]) if train_points else init
        return fit_christoffel(stacked, basis, ridge=ridge)

    model0 = synth([])
    result = run_p2l(
        data,
        synth=synth,
        prop=lambda model, z: bool(contains(model, z)),
        dissatisfaction=lambda model, z: float(christoffel_level(model, z[None, :])[0]),
        init_decision=model0,
    )
    eps = eps_bar(BoundQuery(k=result.k, n=data.n_working, delta=delta)).eps
    return ReachResult(model=result.decision, compression=result, eps=eps)


def estimate_risk(
    membership: Callable[[np.ndarray], np.ndarray],
    sampler: Callable[[int], np.ndarray],
    n_mc: int,
) -> tuple[float, float]:
    """Fraction of fresh samples violating membership, with standard error."""
    if n_mc < 1:
        raise ValueError("n_mc must be >= 1")
    fresh = sampler(n_mc)
    violations = ~np.asarray(membership(fresh), dtype=bool)
    p = float(violations.mean())
    return p, math.sqrt(max(p * (1.0 - p), 0.0) / n_mc)
