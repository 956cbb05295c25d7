"""Generic pick-to-learn meta-algorithms.

The basic loop repeatedly hands a growing training list to a user-supplied
synthesizer, each time appending the point that currently scores worst,
and stops when no remaining point is objectionable. Three entry points are
provided:

* :func:`run_p2l` - stop as soon as every unused point satisfies the
  certified property; the returned violation list is empty.
* :func:`run_p2l_plus` - generalized variant driven by a total order with
  an abstract stop threshold; violations of the property are counted
  post hoc.
* :func:`run_p2l_tts` - time-triggered variant running exactly M
  iterations.

:func:`run_all_iterations` performs the single-pass sweep that certifies
every intermediate decision simultaneously, and :func:`certify` attaches
the risk bound to a finished run.

All synthesizers and predicates passed in must be deterministic functions
of their arguments; a single run is sequential, while distinct runs on
distinct datasets can execute concurrently.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Callable, Sequence

from .bounds import BoundQuery, eps_bar

__all__ = [
    "Dataset",
    "SelectionOrder",
    "CompressionResult",
    "AllIterationsResult",
    "SynthesisError",
    "property_order",
    "tts_order",
    "run_p2l",
    "run_p2l_plus",
    "run_p2l_tts",
    "run_all_iterations",
    "certify",
]

Synthesizer = Callable[[list], Any]
Property = Callable[[Any, Any], bool]
Score = Callable[[Any, list, Any], float]


class SynthesisError(RuntimeError):
    """Raised when the synthesizer fails; carries the offending training list."""

    def __init__(self, message: str, train_list: list):
        super().__init__(message)
        self.train_list = train_list


@dataclass(frozen=True)
class Dataset:
    """Ordered scenario list with a reserved initialization prefix.

    The first ``n_init`` points are available to build the initial
    decision and are excluded from the certified working set; the
    certificate sample size is ``len(points) - n_init``.
    """

    points: Sequence
    n_init: int = 0

    def __post_init__(self):
        if not 0 <= self.n_init <= len(self.points):
            raise ValueError(f"n_init={self.n_init} out of range for {len(self.points)} points")
        if len(self.points) - self.n_init < 1:
            raise ValueError("working set must contain at least one point")

    @property
    def init_points(self) -> list:
        return list(self.points[: self.n_init])

    @property
    def working_indices(self) -> range:
        """Indices of certified points, relative to the full dataset."""
        return range(self.n_init, len(self.points))

    @property
    def n_working(self) -> int:
        return len(self.points) - self.n_init


@dataclass(frozen=True)
class SelectionOrder:
    """Total order over points, with the stop threshold folded in.

    ``score(h, T, z)`` ranks points (larger is picked first; exact ties
    are broken toward the smaller dataset index), and ``exceeds_stop(h,
    T, z)`` says whether z still lies above the stop element given the
    current decision and training list.
    """

    score: Score
    exceeds_stop: Callable[[Any, list, Any], bool]


@dataclass(frozen=True)
class CompressionResult:
    """Output of a meta-algorithm run: decision plus the lists T and U.

    ``train_list`` holds dataset indices in append order; ``violation_list``
    holds indices of working points that violate the property under the
    final decision. The two are disjoint and the certificate is driven by
    their combined size.
    """

    decision: Any
    train_list: tuple[int, ...]
    violation_list: tuple[int, ...]
    iterations: int

    @property
    def k(self) -> int:
        return len(self.train_list) + len(self.violation_list)

    def train_points(self, data: Dataset) -> list:
        return [data.points[i] for i in self.train_list]


@dataclass(frozen=True)
class AllIterationsResult:
    """Per-M sweep entries (M, run result, eps_M) jointly valid at 1 - M_max*delta."""

    entries: tuple[tuple[int, CompressionResult, float], ...]
    delta: float
    joint_confidence: float


def property_order(prop: Property, dissatisfaction: Callable[[Any, Any], float]) -> SelectionOrder:
    """Order encoding a property: violators rank above the stop element by severity."""
    return SelectionOrder(
        score=lambda h, T, z: dissatisfaction(h, z),
        exceeds_stop=lambda h, T, z: not prop(h, z),
    )


def tts_order(m: int, score: Score) -> SelectionOrder:
    """Order whose stop element drops below every point until |T| reaches m."""
    return SelectionOrder(
        score=score,
        exceeds_stop=lambda h, T, z: len(T) < m,
    )


def _synthesize(synth: Synthesizer, train: list):
    try:
        return synth(list(train))
    except Exception as exc:  # noqa: BLE001 - annotate and re-raise
        raise SynthesisError(f"synthesizer failed on |T|={len(train)}: {exc}", list(train)) from exc


def _argbest(candidates: list[int], scores: dict[int, float]) -> int:
    """Index with the largest score; ties go to the smallest dataset index."""
    best = candidates[0]
    for i in candidates[1:]:
        if scores[i] > scores[best]:
            best = i
    return best


def run_p2l(
    data: Dataset,
    synth: Synthesizer,
    prop: Property,
    dissatisfaction: Callable[[Any, Any], float],
    init_decision: Any,
) -> CompressionResult:
    """Property-triggered pick-to-learn loop.

    While some working point outside T violates ``prop`` under the current
    decision, append the violator with the largest dissatisfaction and
    re-synthesize. Terminates after at most ``data.n_working`` iterations
    with an empty violation list.
    """
    h = init_decision
    t_idx: list[int] = []
    t_points: list = []
    in_t: set[int] = set()

    while True:
        violators = []
        scores: dict[int, float] = {}
        for i in data.working_indices:
            if i in in_t:
                continue
            z = data.points[i]
            if not prop(h, z):
                violators.append(i)
                scores[i] = dissatisfaction(h, z)
        if not violators:
            break
        pick = _argbest(violators, scores)
        t_idx.append(pick)
        in_t.add(pick)
        t_points.append(data.points[pick])
        h = _synthesize(synth, t_points)

    return CompressionResult(
        decision=h,
        train_list=tuple(t_idx),
        violation_list=(),
        iterations=len(t_idx),
    )


def run_p2l_plus(
    data: Dataset,
    synth: Synthesizer,
    order: SelectionOrder,
    prop: Property,
    init_decision: Any,
) -> CompressionResult:
    """Order-triggered pick-to-learn loop with post-hoc violation count.

    While some working point outside T exceeds the stop element, append
    the maximal point in the order and re-synthesize. On exit, U collects
    the working points outside T violating ``prop`` under the final
    decision.
    """
    h = init_decision
    t_idx: list[int] = []
    t_points: list = []
    in_t: set[int] = set()

    while True:
        above = []
        scores: dict[int, float] = {}
        for i in data.working_indices:
            if i in in_t:
                continue
            z = data.points[i]
            if order.exceeds_stop(h, t_points, z):
                above.append(i)
                scores[i] = order.score(h, t_points, z)
        if not above:
            break
        pick = _argbest(above, scores)
        t_idx.append(pick)
        in_t.add(pick)
        t_points.append(data.points[pick])
        h = _synthesize(synth, t_points)

    u_idx = tuple(
        i for i in data.working_indices if i not in in_t and not prop(h, data.points[i])
    )
    return CompressionResult(
        decision=h,
        train_list=tuple(t_idx),
        violation_list=u_idx,
        iterations=len(t_idx),
    )


def run_p2l_tts(
    data: Dataset,
    m: int,
    synth: Synthesizer,
    selection_score: Score,
    prop: Property,
    init_decision: Any,
) -> CompressionResult:
    """Time-triggered variant: exactly m append iterations, then count violations."""
    if not 0 <= m <= data.n_working:
        raise ValueError(f"m={m} out of range for working set of size {data.n_working}")
    return run_p2l_plus(data, synth, tts_order(m, selection_score), prop, init_decision)


def run_all_iterations(
    data: Dataset,
    synth: Synthesizer,
    selection_score: Score,
    prop: Property,
    init_decision: Any,
    delta: float,
) -> AllIterationsResult:
    """Single-pass sweep certifying the decision after every append.

    Runs the selection loop once until T equals the working set, storing
    each intermediate decision h_M; the per-M certificates
    eps(|T_M| + |U_M|, delta, n_working) are then jointly valid at
    confidence 1 - n_working * delta. Selecting any M afterwards (for
    example the one minimizing |T_M| + |U_M|) retains that joint
    guarantee.
    """
    n_w = data.n_working
    h = init_decision
    t_idx: list[int] = []
    t_points: list = []
    in_t: set[int] = set()
    decisions: list = []

    for _ in range(n_w):
        remaining = []
        scores: dict[int, float] = {}
        for i in data.working_indices:
            if i in in_t:
                continue
            scores[i] = selection_score(h, t_points, data.points[i])
            remaining.append(i)
        pick = _argbest(remaining, scores)
        t_idx.append(pick)
        in_t.add(pick)
        t_points.append(data.points[pick])
        h = _synthesize(synth, t_points)
        decisions.append(h)

    entries = []
    for m in range(1, n_w + 1):
        h_m = decisions[m - 1]
        t_m = tuple(t_idx[:m])
        members = set(t_m)
        u_m = tuple(
            i for i in data.working_indices if i not in members and not prop(h_m, data.points[i])
        )
        result = CompressionResult(
            decision=h_m, train_list=t_m, violation_list=u_m, iterations=m
        )
        entries.append((m, result, certify(result, delta, n_w)))

    return AllIterationsResult(
        entries=tuple(entries),
        delta=delta,
        joint_confidence=1.0 - n_w * delta,
    )


def certify(result: CompressionResult, delta: float, n_effective: int) -> float:
    """Risk certificate eps_bar(|T| + |U|, delta, n_effective) for a finished run."""
    k = result.k
    if k > n_effective:
        raise ValueError(f"|T|+|U|={k} exceeds the certified sample size {n_effective}")
    return eps_bar(BoundQuery(k=k, n=n_effective, delta=delta)).eps
