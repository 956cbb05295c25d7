"""Test-set and split-conformal baselines for reachable-set estimation.

Both baselines spend part of the dataset to buy a certificate: the
test-set route counts violations of a trained sublevel set on held-out
points and inverts the binomial tail, while the conformal route
calibrates a sublevel threshold at an order statistic of held-out scores.
Each sweeps a ladder of training fractions and then selects the candidate
that matches a target certificate at the smallest set volume, mirroring
how the pick-to-learn result is compared against them. The per-fraction
confidence budget is delta; a sweep over f fractions is jointly valid at
1 - f * delta.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from .bounds import binomial_tail_inversion, conformal_eps
from .reachability import (
    ChristoffelModel,
    MonomialBasis,
    SingularMomentMatrixError,
    christoffel_level,
    fit_christoffel,
)

__all__ = [
    "SplitPlan",
    "FractionCandidate",
    "BaselineSelection",
    "testset_reach",
    "conformal_reach",
]

logger = logging.getLogger(__name__)

VolumeFn = Callable[[ChristoffelModel], float]


@dataclass(frozen=True)
class SplitPlan:
    """Training-fraction ladder, per-fraction confidence, and the shuffle seed."""

    fractions: tuple[float, ...] = (0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9)
    delta_per_fraction: float = 0.01
    seed: int = 0

    def __post_init__(self):
        if any(not 0.0 < f < 1.0 for f in self.fractions):
            raise ValueError("fractions must lie strictly inside (0, 1)")
        if any(b <= a for a, b in zip(self.fractions, self.fractions[1:])):
            raise ValueError("fractions must be strictly increasing")

    @property
    def joint_confidence(self) -> float:
        return 1.0 - len(self.fractions) * self.delta_per_fraction


@dataclass(frozen=True)
class FractionCandidate:
    fraction: float
    eps: float
    volume: float
    k: int
    model: ChristoffelModel


@dataclass(frozen=True)
class BaselineSelection:
    """Chosen candidate of a fraction sweep; ``flagged`` marks a fallback pick."""

    model: ChristoffelModel
    eps: float
    fraction: float
    k: int
    flagged: bool
    candidates: tuple[FractionCandidate, ...]


def _shuffled(points: np.ndarray, seed: int) -> np.ndarray:
    perm = np.random.default_rng(seed).permutation(len(points))
    return points[perm]


def testset_reach(
    points: np.ndarray,
    plan: SplitPlan,
    d: int,
    target_eps: float,
    volume_fn: VolumeFn,
    ridge: float = 0.0,
) -> BaselineSelection:
    """Train/test split sweep with binomial-tail certificates.

    For each fraction, the model is fitted on the training prefix of a
    seeded shuffle and its violations are counted on the disjoint
    remainder; the certificate is the binomial tail inversion at the
    plan's per-fraction delta. Among candidates with eps <= target_eps
    the smallest-volume set wins; if none qualifies, the smallest-eps
    candidate is returned flagged.
    """
    points = np.asarray(points, dtype=float)
    basis = MonomialBasis.create(points.shape[1], d)
    shuffled = _shuffled(points, plan.seed)

    candidates = []
    for fraction in plan.fractions:
        n_train = int(round(fraction * len(shuffled)))
        if n_train < 1 or n_train >= len(shuffled):
            raise ValueError(f"fraction {fraction} leaves an empty split")
        train, test = shuffled[:n_train], shuffled[n_train:]
        try:
            model = fit_christoffel(train, basis, ridge=ridge)
        except SingularMomentMatrixError as exc:
            logger.warning("test-set fit failed at fraction %.2f: %s", fraction, exc)
            continue
        k = int((christoffel_level(model, test) > model.alpha).sum())
        eps = binomial_tail_inversion(k, len(test), plan.delta_per_fraction)
        candidates.append(
            FractionCandidate(fraction=fraction, eps=eps, volume=volume_fn(model), k=k, model=model)
        )

    if not candidates:
        raise RuntimeError("every test-set fraction failed to fit")
    feasible = [c for c in candidates if c.eps <= target_eps]
    if feasible:
        best = min(feasible, key=lambda c: (c.volume, c.fraction))
        flagged = False
    else:
        best = min(candidates, key=lambda c: (c.eps, c.fraction))
        flagged = True
    return BaselineSelection(
        model=best.model,
        eps=best.eps,
        fraction=best.fraction,
        k=best.k,
        flagged=flagged,
        candidates=tuple(candidates),
    )


def conformal_reach(
    points: np.ndarray,
    plan: SplitPlan,
    d: int,
    target_eps: float,
    volume_fn: VolumeFn,
    ridge: float = 0.0,
) -> BaselineSelection:
    """Split-conformal sweep calibrated to match a target certificate.

    The score is the inverse Christoffel level fitted on the training
    prefix; calibration scores are sorted ascending (ties kept, order
    stabilized by value) and the set is the sublevel region at the k-th
    order statistic. Per fraction, k is the largest index whose
    certificate still weakly exceeds target_eps, i.e. the smallest
    eps >= target_eps; fractions where even k = 1 falls below the target
    are dropped with a log message. Across surviving fractions the
    smallest-volume set wins.
    """
    points = np.asarray(points, dtype=float)
    basis = MonomialBasis.create(points.shape[1], d)
    shuffled = _shuffled(points, plan.seed)

    candidates = []
    for fraction in plan.fractions:
        n_train = int(round(fraction * len(shuffled)))
        if n_train < 1 or n_train >= len(shuffled):
            raise ValueError(f"fraction {fraction} leaves an empty split")
        train, cal = shuffled[:n_train], shuffled[n_train:]
        try:
            model = fit_christoffel(train, basis, ridge=ridge)
        except SingularMomentMatrixError as exc:
            logger.warning("conformal fit failed at fraction %.2f: %s", fraction, exc)
            continue
        scores = np.sort(christoffel_level(model, cal))
        n_cal = len(cal)

        # conformal_eps is nonincreasing in k: binary-search the largest k
        # with eps_k >= target_eps
        if conformal_eps(1, n_cal, plan.delta_per_fraction) < target_eps:
            logger.warning(
                "conformal fraction %.2f cannot reach target eps %.4g; dropped",
                fraction,
                target_eps,
            )
            continue
        lo, hi = 1, n_cal
        while lo < hi:
            mid = (lo + hi + 1) // 2
            if conformal_eps(mid, n_cal, plan.delta_per_fraction) >= target_eps:
                lo = mid
            else:
                hi = mid - 1
        k = lo
        eps = conformal_eps(k, n_cal, plan.delta_per_fraction)
        calibrated = replace(model, alpha=float(scores[k - 1]))
        candidates.append(
            FractionCandidate(
                fraction=fraction, eps=eps, volume=volume_fn(calibrated), k=k, model=calibrated
            )
        )

    if not candidates:
        raise RuntimeError("every conformal fraction was infeasible for the target certificate")
    best = min(candidates, key=lambda c: (c.volume, c.fraction))
    return BaselineSelection(
        model=best.model,
        eps=best.eps,
        fraction=best.fraction,
        k=best.k,
        flagged=False,
        candidates=tuple(candidates),
    )
