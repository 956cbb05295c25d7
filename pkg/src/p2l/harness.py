"""Experiment orchestration: seeded repetition sweeps, records, CSV/JSON output.

Each repetition derives all of its randomness from (master seed, rep
index, stream label), so a sweep produces identical records for any
worker count and execution order. Output files carry a timestamp in the
name; re-running never rewrites earlier results.
"""

from __future__ import annotations

import dataclasses
import io
import json
import logging
import os
import platform
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path

import numpy as np

from . import _seeds
from .bounds import BoundQuery, eps_bar
from .baselines import SplitPlan, conformal_reach, testset_reach
from .core import Dataset
from .opt_control import (
    LinearBenchmark,
    PolicyGrid,
    certify_cdf,
    estimate_cost_risk,
    oc_p2l,
    sample_scenarios,
    _cost_matrix,
)
from .reachability import (
    DuffingConfig,
    christoffel_level,
    duffing_terminal,
    reach_p2l,
)

__all__ = [
    "BoundTableConfig",
    "ReachConfig",
    "OcConfig",
    "ExperimentConfig",
    "LevelRecord",
    "RunRecord",
    "run_experiment",
    "summarize",
    "write_csv",
    "write_summary",
    "load_config",
    "resolve_workers",
]

logger = logging.getLogger(__name__)

EXPERIMENTS = ("bound-table", "reach", "oc", "oc-cdf")

CSV_SCHEMAS = {
    "bound-table": ("k", "N", "delta", "eps"),
    "reach": ("rep", "method", "volume", "volume_se", "eps_bound", "risk_mc", "risk_se", "T_size"),
    "oc": ("rep", "N", "theta1", "theta2", "T_size", "eps_bound", "risk_mc"),
    "oc-cdf": ("rep", "N", "gamma", "k", "eps", "tail_mc"),
}


@dataclass(frozen=True)
class BoundTableConfig:
    ks: tuple[int, ...] = (0, 1, 2, 5, 10, 20, 50, 100)
    ns: tuple[int, ...] = (100, 500, 2000)
    deltas: tuple[float, ...] = (1e-2, 1e-4, 1e-6)


@dataclass(frozen=True)
class ReachConfig:
    n: int = 2000
    n_init: int = 200
    d: int = 10
    delta: float = 0.01
    duffing: DuffingConfig = field(default_factory=DuffingConfig)
    # init-state sampler: {"type": "uniform_box", "low": [...], "high": [...]}
    # or {"type": "gaussian", "mean": [...], "std": [...]}
    init_distribution: dict = field(
        default_factory=lambda: {"type": "uniform_box", "low": [-1.0, -1.0], "high": [1.0, 1.0]}
    )
    volume_box: dict = field(
        default_factory=lambda: {"low": [-2.6, -2.8], "high": [1.8, 3.3]}
    )
    mc_samples: int = 50_000
    volume_samples: int = 200_000
    ridge: float = 1e-10
    fractions: tuple[float, ...] = (0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9)


@dataclass(frozen=True)
class OcConfig:
    n: int = 128
    n_init: int = 1
    delta: float = 0.01
    j_bar: float = 4.0
    mc_samples: int = 10_000
    levels: tuple[float, ...] = (0.4, 0.8, 1.2, 1.6, 2.0, 2.4, 2.8, 3.2, 3.6, 4.0)
    benchmark: LinearBenchmark = field(default_factory=LinearBenchmark)
    grid: PolicyGrid = field(default_factory=PolicyGrid)


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    seed: int = 0
    reps: int = 1
    output_dir: str | None = None
    workers: int | None = None
    table: BoundTableConfig = field(default_factory=BoundTableConfig)
    reach: ReachConfig = field(default_factory=ReachConfig)
    oc: OcConfig = field(default_factory=OcConfig)

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ValueError(f"unknown experiment {self.experiment!r}; pick one of {EXPERIMENTS}")
        if self.reps < 1:
            raise ValueError("reps must be >= 1")


@dataclass(frozen=True)
class LevelRecord:
    gamma: float
    k: int
    eps: float
    tail_mc: float


@dataclass(frozen=True)
class RunRecord:
    rep: int
    method: str
    eps: float | None = None
    risk: float | None = None
    risk_se: float | None = None
    volume: float | None = None
    volume_se: float | None = None
    t_size: int | None = None
    theta1: float | None = None
    theta2: float | None = None
    n: int | None = None
    k: int | None = None
    delta: float | None = None
    levels: tuple[LevelRecord, ...] = ()
    wall_clock: float = 0.0
    error: str | None = None


# ---------------------------------------------------------------------------
# config loading
# ---------------------------------------------------------------------------


def _merge_dataclass(cls, defaults, overrides: dict):
    """Rebuild a (frozen) dataclass with JSON overrides applied field-wise."""
    kwargs = {}
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(overrides) - names
    if unknown:
        raise ValueError(f"unknown {cls.__name__} config keys: {sorted(unknown)}")
    for f in dataclasses.fields(cls):
        if f.name not in overrides:
            kwargs[f.name] = getattr(defaults, f.name)
            continue
        value = overrides[f.name]
        current = getattr(defaults, f.name)
        if dataclasses.is_dataclass(current) and isinstance(value, dict):
            kwargs[f.name] = _merge_dataclass(type(current), current, value)
        elif isinstance(current, tuple) and isinstance(value, (list, tuple)):
            kwargs[f.name] = tuple(value)
        else:
            kwargs[f.name] = value
    return cls(**kwargs)


def load_config(
    experiment: str,
    path: str | None = None,
    seed: int = 0,
    reps: int = 1,
    output_dir: str | None = None,
    workers: int | None = None,
) -> ExperimentConfig:
    """Build an experiment config from shipped defaults plus a JSON override file."""
    base = ExperimentConfig(
        experiment=experiment, seed=seed, reps=reps, output_dir=output_dir, workers=workers
    )
    if path is None:
        return base
    with open(path, encoding="utf-8") as fh:
        overrides = json.load(fh)
    protected = {"experiment", "seed", "reps", "output_dir", "workers"}
    overrides = {k: v for k, v in overrides.items() if k not in protected}
    return _merge_dataclass(ExperimentConfig, base, {**overrides})


def resolve_workers(config: ExperimentConfig) -> int:
    cap = os.environ.get("P2L_THREADS")
    requested = config.workers or (os.cpu_count() or 1)
    if cap is not None:
        requested = min(requested, max(1, int(cap)))
    return max(1, min(requested, config.reps))


# ---------------------------------------------------------------------------
# samplers
# ---------------------------------------------------------------------------


def _init_state_sampler(spec: dict):
    kind = spec.get("type", "uniform_box")
    if kind == "uniform_box":
        lo = np.asarray(spec["low"], dtype=float)
        hi = np.asarray(spec["high"], dtype=float)
        return lambda rng, n: rng.uniform(lo, hi, size=(n, lo.size))
    if kind == "gaussian":
        mean = np.asarray(spec["mean"], dtype=float)
        std = np.asarray(spec["std"], dtype=float)
        return lambda rng, n: rng.normal(mean, std, size=(n, mean.size))
    raise ValueError(f"unknown init distribution type {kind!r}")


# ---------------------------------------------------------------------------
# per-repetition runners
# ---------------------------------------------------------------------------


def _reach_rep(cfg: ReachConfig, master_seed: int, rep: int) -> list[RunRecord]:
    t_start = time.monotonic()
    rng_data = _seeds.stream_rng(master_seed, rep, _seeds.STREAM_DATA)
    rng_mc = _seeds.stream_rng(master_seed, rep, _seeds.STREAM_MC)
    rng_vol = _seeds.stream_rng(master_seed, rep, _seeds.STREAM_VOLUME)
    rng_split = _seeds.stream_rng(master_seed, rep, _seeds.STREAM_SPLIT)

    sampler = _init_state_sampler(cfg.init_distribution)
    x0 = np.vstack([sampler(rng_data, cfg.n), sampler(rng_mc, cfg.mc_samples)])
    terminals = duffing_terminal(x0, cfg.duffing)
    points, fresh = terminals[: cfg.n], terminals[cfg.n :]

    box_lo = np.asarray(cfg.volume_box["low"], dtype=float)
    box_hi = np.asarray(cfg.volume_box["high"], dtype=float)
    if (points < box_lo).any() or (points > box_hi).any():
        logger.warning("rep %d: volume box does not enclose all data points", rep)
    box_vol = float(np.prod(box_hi - box_lo))
    vol_pool = rng_vol.uniform(box_lo, box_hi, size=(cfg.volume_samples, box_lo.size))

    def volume_of(model) -> tuple[float, float]:
        p = float((christoffel_level(model, vol_pool) <= model.alpha).mean())
        se = float(np.sqrt(max(p * (1 - p), 0.0) / cfg.volume_samples) * box_vol)
        return p * box_vol, se

    def risk_of(model) -> tuple[float, float]:
        p = float((christoffel_level(model, fresh) > model.alpha).mean())
        return p, float(np.sqrt(max(p * (1 - p), 0.0) / len(fresh)))

    records = []

    data = Dataset(points=points, n_init=cfg.n_init)
    run = reach_p2l(data, d=cfg.d, delta=cfg.delta, ridge=cfg.ridge)
    vol, vol_se = volume_of(run.model)
    risk, risk_se = risk_of(run.model)
    records.append(
        RunRecord(
            rep=rep, method="P2L", eps=run.eps, risk=risk, risk_se=risk_se,
            volume=vol, volume_se=vol_se, t_size=len(run.compression.train_list),
            n=cfg.n, wall_clock=time.monotonic() - t_start,
        )
    )

    plan = SplitPlan(
        fractions=cfg.fractions,
        delta_per_fraction=cfg.delta,
        seed=int(rng_split.integers(0, 2**63)),
    )
    ts = testset_reach(points, plan, cfg.d, target_eps=run.eps,
                       volume_fn=lambda m: volume_of(m)[0], ridge=cfg.ridge)
    risk, risk_se = risk_of(ts.model)
    vol, vol_se = volume_of(ts.model)
    records.append(
        RunRecord(
            rep=rep, method="TS", eps=ts.eps, risk=risk, risk_se=risk_se,
            volume=vol, volume_se=vol_se,
            t_size=int(round(ts.fraction * cfg.n)),
            n=cfg.n, wall_clock=time.monotonic() - t_start,
        )
    )

    conf = conformal_reach(points, plan, cfg.d, target_eps=run.eps,
                           volume_fn=lambda m: volume_of(m)[0], ridge=cfg.ridge)
    risk, risk_se = risk_of(conf.model)
    vol, vol_se = volume_of(conf.model)
    records.append(
        RunRecord(
            rep=rep, method="Conf", eps=conf.eps, risk=risk, risk_se=risk_se,
            volume=vol, volume_se=vol_se, t_size=conf.k,
            n=cfg.n, wall_clock=time.monotonic() - t_start,
        )
    )
    return records


def _oc_rep(cfg: OcConfig, master_seed: int, rep: int) -> list[RunRecord]:
    t_start = time.monotonic()
    rng_data = _seeds.stream_rng(master_seed, rep, _seeds.STREAM_DATA)
    rng_mc = _seeds.stream_rng(master_seed, rep, _seeds.STREAM_MC)

    scenarios = sample_scenarios(cfg.benchmark, cfg.n, rng_data)
    data = Dataset(points=scenarios, n_init=cfg.n_init)
    run = oc_p2l(data, cfg.benchmark, cfg.grid, j_bar=cfg.j_bar, delta=cfg.delta)
    risk, risk_se = estimate_cost_risk(run.policy, cfg.benchmark, cfg.j_bar, cfg.mc_samples, rng_mc)
    return [
        RunRecord(
            rep=rep, method="P2L", eps=run.eps, risk=risk, risk_se=risk_se,
            t_size=len(run.compression.train_list),
            theta1=run.policy.theta1, theta2=run.policy.theta2,
            n=cfg.n, wall_clock=time.monotonic() - t_start,
        )
    ]


def _oc_cdf_rep(cfg: OcConfig, master_seed: int, rep: int) -> list[RunRecord]:
    t_start = time.monotonic()
    rng_data = _seeds.stream_rng(master_seed, rep, _seeds.STREAM_DATA)
    rng_mc = _seeds.stream_rng(master_seed, rep, _seeds.STREAM_MC)

    scenarios = sample_scenarios(cfg.benchmark, cfg.n, rng_data)
    data = Dataset(points=scenarios, n_init=cfg.n_init)
    result = certify_cdf(data, cfg.benchmark, cfg.grid, cfg.levels, delta_per_level=cfg.delta)

    bench = cfg.benchmark
    x0 = rng_mc.normal(bench.x0_mean, bench.x0_std, cfg.mc_samples)
    w = rng_mc.normal(bench.w_mean, bench.w_std, (cfg.mc_samples, bench.horizon))
    costs = _cost_matrix(
        np.array([result.policy.theta1]), np.array([result.policy.theta2]), x0, w, bench
    )[0]

    levels = tuple(
        LevelRecord(gamma=c.gamma, k=c.k, eps=c.eps, tail_mc=float((costs > c.gamma).mean()))
        for c in result.levels
    )
    return [
        RunRecord(
            rep=rep, method="P2L", eps=result.levels[-1].eps,
            t_size=len(result.compression.train_list),
            theta1=result.policy.theta1, theta2=result.policy.theta2,
            n=cfg.n, levels=levels, wall_clock=time.monotonic() - t_start,
        )
    ]


def _bound_table(cfg: BoundTableConfig) -> list[RunRecord]:
    records = []
    for n in cfg.ns:
        for delta in cfg.deltas:
            for k in cfg.ks:
                if k > n:
                    continue
                res = eps_bar(BoundQuery(k=k, n=n, delta=delta))
                records.append(
                    RunRecord(rep=0, method="bound", eps=res.eps, k=k, n=n, delta=delta)
                )
    return records


# ---------------------------------------------------------------------------
# sweep driver
# ---------------------------------------------------------------------------


def run_experiment(config: ExperimentConfig) -> list[RunRecord]:
    """Run all repetitions; failed reps become error records, never aborts."""
    if config.experiment == "bound-table":
        return _bound_table(config.table)

    runner = {
        "reach": lambda rep: _reach_rep(config.reach, config.seed, rep),
        "oc": lambda rep: _oc_rep(config.oc, config.seed, rep),
        "oc-cdf": lambda rep: _oc_cdf_rep(config.oc, config.seed, rep),
    }[config.experiment]

    def safe(rep: int) -> list[RunRecord]:
        try:
            return runner(rep)
        except Exception as exc:  # noqa: BLE001 - failures become rows
            logger.exception("rep %d failed", rep)
            return [RunRecord(rep=rep, method="failed", error=str(exc))]

    workers = resolve_workers(config)
    if workers == 1:
        per_rep = [safe(rep) for rep in range(config.reps)]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            per_rep = list(pool.map(safe, range(config.reps)))

    return [record for rep_records in per_rep for record in rep_records]


def summarize(records: list[RunRecord]) -> dict:
    """Per-method mean and sample standard deviation of each numeric metric."""
    if not records:
        raise ValueError("no records to summarize")

    def agg(values: list[float]) -> dict:
        arr = np.asarray(values, dtype=float)
        return {
            "mean": float(arr.mean()),
            "std": float(arr.std(ddof=1)) if arr.size > 1 else 0.0,
            "count": int(arr.size),
        }

    out: dict = {}
    failed = [r for r in records if r.error is not None]
    for method in sorted({r.method for r in records if r.error is None}):
        rows = [r for r in records if r.method == method and r.error is None]
        metrics = {}
        for name in ("eps", "risk", "volume", "t_size"):
            values = [getattr(r, name) for r in rows if getattr(r, name) is not None]
            if values:
                metrics[name] = agg(values)
        out[method] = metrics
    out["failed_reps"] = sorted({r.rep for r in failed})
    return out


# ---------------------------------------------------------------------------
# emission
# ---------------------------------------------------------------------------


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def render_csv(records: list[RunRecord], experiment: str) -> str:
    """Render records to the experiment's fixed CSV schema (LF line endings)."""
    columns = CSV_SCHEMAS[experiment]
    buf = io.StringIO()
    buf.write(",".join(columns) + "\n")

    def row(values) -> None:
        buf.write(",".join(_fmt(v) for v in values) + "\n")

    for r in records:
        if experiment == "bound-table":
            row((r.k, r.n, r.delta, r.eps))
        elif experiment == "reach":
            row((r.rep, r.method, r.volume, r.volume_se, r.eps, r.risk, r.risk_se, r.t_size))
        elif experiment == "oc":
            row((r.rep, r.n, r.theta1, r.theta2, r.t_size, r.eps, r.risk))
        elif experiment == "oc-cdf":
            for lv in r.levels:
                row((r.rep, r.n, lv.gamma, lv.k, lv.eps, lv.tail_mc))
    return buf.getvalue()


def _timestamp() -> str:
    return datetime.now().strftime("%Y%m%d-%H%M%S-%f")


def write_csv(records: list[RunRecord], experiment: str, out_dir: str | Path) -> Path:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / f"{experiment}_{_timestamp()}.csv"
    path.write_text(render_csv(records, experiment), encoding="utf-8", newline="\n")
    return path


def write_summary(
    config: ExperimentConfig,
    records: list[RunRecord],
    out_dir: str | Path,
    wall_clock: float,
) -> Path:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    payload = {
        "config": dataclasses.asdict(config),
        "aggregates": summarize(records),
        "versions": {
            "python": platform.python_version(),
            "numpy": np.__version__,
        },
        "wall_clock_seconds": wall_clock,
    }
    path = out_dir / f"summary_{_timestamp()}.json"
    path.write_text(json.dumps(payload, indent=2, default=str) + "\n", encoding="utf-8")
    return path
