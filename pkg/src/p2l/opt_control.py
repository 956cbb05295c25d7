"""Scalar stochastic optimal control benchmark with certified cost thresholds.

A one-dimensional linear system x_{t+1} = a x_t + b u_t + w_t is driven by
the static feedback u_t = theta1 x_t + theta2 over a finite horizon. The
rollout cost charges every post-decision state and every input,

    J = sum_{t=0}^{H-1} [ r u_t^2 + q x_{t+1}^2 ],

so the uncontrollable initial state carries no cost term. Synthesis is an
exhaustive scan of a theta grid minimizing the empirical mean cost;
pick-to-learn then certifies the probability that a fresh scenario's cost
exceeds a threshold, either for one threshold (:func:`oc_p2l`) or for a
whole ladder of levels bounding the cost distribution's tail
(:func:`certify_cdf`).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .bounds import BoundQuery, eps_bar
from .core import CompressionResult, Dataset, run_p2l

__all__ = [
    "LinearBenchmark",
    "PolicyGrid",
    "Scenario",
    "Policy",
    "OcResult",
    "LevelCertificate",
    "CdfResult",
    "rollout_cost",
    "grid_synthesize",
    "sample_scenarios",
    "oc_p2l",
    "certify_cdf",
    "estimate_cost_risk",
]


@dataclass(frozen=True)
class LinearBenchmark:
    """Scalar benchmark parameters and the disclosed sampling distributions.

    ``noise_param`` selects how the second distribution parameter is read:
    "variance" (the default) or "stddev".
    """

    a: float = 0.8
    b: float = 0.1
    horizon: int = 9
    q: float = 5.0
    r: float = 0.003
    x0_mean: float = 2.3
    x0_param: float = 0.009
    w_mean: float = 0.3
    w_param: float = 0.009
    noise_param: str = "variance"

    def __post_init__(self):
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        if self.q <= 0 or self.r <= 0:
            raise ValueError("cost weights q and r must be positive")
        if self.noise_param not in ("variance", "stddev"):
            raise ValueError(f"noise_param must be 'variance' or 'stddev', got {self.noise_param!r}")

    @property
    def x0_std(self) -> float:
        return math.sqrt(self.x0_param) if self.noise_param == "variance" else self.x0_param

    @property
    def w_std(self) -> float:
        return math.sqrt(self.w_param) if self.noise_param == "variance" else self.w_param


@dataclass(frozen=True)
class PolicyGrid:
    """Equally spaced feedback-gain grid, endpoints included."""

    theta1_range: tuple[float, float] = (-18.0, 2.0)
    theta2_range: tuple[float, float] = (-5.0, 5.0)
    points_per_axis: int = 100

    @property
    def theta1_values(self) -> np.ndarray:
        return np.linspace(*self.theta1_range, self.points_per_axis)

    @property
    def theta2_values(self) -> np.ndarray:
        return np.linspace(*self.theta2_range, self.points_per_axis)


@dataclass(frozen=True)
class Scenario:
    """One uncertainty draw: initial state plus the horizon-length noise path."""

    x0: float
    w: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "w", np.asarray(self.w, dtype=float))


@dataclass(frozen=True)
class Policy:
    theta1: float
    theta2: float
    grid_index: tuple[int, int]


def _scenario_arrays(scenarios: Sequence[Scenario], horizon: int) -> tuple[np.ndarray, np.ndarray]:
    x0 = np.array([s.x0 for s in scenarios], dtype=float)
    w = np.stack([s.w for s in scenarios])
    if w.shape[1] != horizon:
        raise ValueError(f"scenario noise length {w.shape[1]} != horizon {horizon}")
    return x0, w


def _cost_matrix(th1: np.ndarray, th2: np.ndarray, x0: np.ndarray, w: np.ndarray,
                 bench: LinearBenchmark) -> np.ndarray:
    """(n_policies, n_scenarios) rollout costs, fully vectorized."""
    th1 = th1[:, None]
    th2 = th2[:, None]
    x = np.broadcast_to(x0, (th1.shape[0], x0.size)).copy()
    cost = np.zeros_like(x)
    for t in range(bench.horizon):
        u = th1 * x + th2
        cost += bench.r * u * u
        x = bench.a * x + bench.b * u + w[:, t]
        cost += bench.q * x * x
    return cost


def rollout_cost(policy: Policy, z: Scenario, bench: LinearBenchmark) -> float:
    """Closed-loop cost of one policy on one scenario."""
    x0, w = _scenario_arrays([z], bench.horizon)
    return float(
        _cost_matrix(np.array([policy.theta1]), np.array([policy.theta2]), x0, w, bench)[0, 0]
    )


def grid_synthesize(train: Sequence[Scenario], grid: PolicyGrid, bench: LinearBenchmark) -> Policy:
    """Empirical-mean cost minimizer over the full policy grid.

    Every grid policy is evaluated; ties resolve to the smallest
    (theta1 index, theta2 index), which is the first argmin in row-major
    order.
    """
    if len(train) < 1:
        raise ValueError("need at least one training scenario")
    x0, w = _scenario_arrays(train, bench.horizon)
    t1 = grid.theta1_values
    t2 = grid.theta2_values
    th1 = np.repeat(t1, t2.size)
    th2 = np.tile(t2, t1.size)
    mean_cost = _cost_matrix(th1, th2, x0, w, bench).mean(axis=1)
    flat = int(np.argmin(mean_cost))
    i, j = divmod(flat, t2.size)
    return Policy(theta1=float(t1[i]), theta2=float(t2[j]), grid_index=(i, j))


def sample_scenarios(bench: LinearBenchmark, n: int, rng: np.random.Generator) -> list[Scenario]:
    """Draw n scenarios from the benchmark's disclosed distributions."""
    x0 = rng.normal(bench.x0_mean, bench.x0_std, n)
    w = rng.normal(bench.w_mean, bench.w_std, (n, bench.horizon))
    return [Scenario(x0=float(x0[i]), w=w[i]) for i in range(n)]


@dataclass(frozen=True)
class OcResult:
    policy: Policy
    compression: CompressionResult
    eps: float


def oc_p2l(
    data: Dataset,
    bench: LinearBenchmark,
    grid: PolicyGrid,
    j_bar: float,
    delta: float,
) -> OcResult:
    """Certified policy for the threshold property J(policy, z) <= j_bar.

    The synthesizer minimizes the empirical mean cost over the
    initialization scenarios plus the current training list; the cost
    itself ranks the violators. Returns eps_bar(|T|, delta, n_working).
    """
    if len(data.points) < 2:
        raise ValueError("need at least two scenarios (one initializes the policy)")
    init = data.init_points

    def synth(train_points: list) -> Policy:
        return grid_synthesize(list(init) + list(train_points), grid, bench)

    def cost(policy: Policy, z: Scenario) -> float:
        return rollout_cost(policy, z, bench)

    result = run_p2l(
        data,
        synth=synth,
        prop=lambda policy, z: cost(policy, z) <= j_bar,
        dissatisfaction=cost,
        init_decision=synth([]),
    )
    eps = eps_bar(BoundQuery(k=result.k, n=data.n_working, delta=delta)).eps
    return OcResult(policy=result.decision, compression=result, eps=eps)


@dataclass(frozen=True)
class LevelCertificate:
    gamma: float
    k: int
    eps: float


@dataclass(frozen=True)
class CdfResult:
    policy: Policy
    compression: CompressionResult
    levels: tuple[LevelCertificate, ...]
    joint_confidence: float


def certify_cdf(
    data: Dataset,
    bench: LinearBenchmark,
    grid: PolicyGrid,
    levels: Sequence[float],
    delta_per_level: float,
) -> CdfResult:
    """Simultaneous tail bounds of the cost distribution at several levels.

    A single pick-to-learn run with the largest level as the termination
    threshold fixes the policy and T; each level gamma then counts its own
    violation set U_gamma among the unused working points and gets
    eps_bar(|T| + |U_gamma|, delta, n_working). The r statements hold
    jointly with confidence 1 - r * delta_per_level.
    """
    levels = [float(g) for g in levels]
    if any(b <= a for a, b in zip(levels, levels[1:])):
        raise ValueError("levels must be strictly increasing")

    run = oc_p2l(data, bench, grid, j_bar=levels[-1], delta=delta_per_level)
    in_t = set(run.compression.train_list)
    unused = [i for i in data.working_indices if i not in in_t]
    x0, w = _scenario_arrays([data.points[i] for i in unused], bench.horizon)
    costs = _cost_matrix(
        np.array([run.policy.theta1]), np.array([run.policy.theta2]), x0, w, bench
    )[0]

    t_size = len(run.compression.train_list)
    certs = []
    for gamma in levels:
        k = t_size + int((costs > gamma).sum())
        certs.append(
            LevelCertificate(
                gamma=gamma,
                k=k,
                eps=eps_bar(BoundQuery(k=k, n=data.n_working, delta=delta_per_level)).eps,
            )
        )
    return CdfResult(
        policy=run.policy,
        compression=run.compression,
        levels=tuple(certs),
        joint_confidence=1.0 - len(levels) * delta_per_level,
    )


def estimate_cost_risk(
    policy: Policy,
    bench: LinearBenchmark,
    threshold: float,
    n_mc: int,
    seed: int | np.random.Generator,
) -> tuple[float, float]:
    """Monte-Carlo probability that a fresh scenario's cost exceeds the threshold."""
    if n_mc < 1:
        raise ValueError("n_mc must be >= 1")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    x0 = rng.normal(bench.x0_mean, bench.x0_std, n_mc)
    w = rng.normal(bench.w_mean, bench.w_std, (n_mc, bench.horizon))
    costs = _cost_matrix(np.array([policy.theta1]), np.array([policy.theta2]), x0, w, bench)[0]
    p = float((costs > threshold).mean())
    return p, math.sqrt(max(p * (1.0 - p), 0.0) / n_mc)
