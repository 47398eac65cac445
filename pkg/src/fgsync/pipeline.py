"""Per-epoch candidate generation, evaluation and selection."""

from __future__ import annotations

import enum
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np
from scipy.spatial import cKDTree

from . import se2
from .combinatorics import (
    DEFAULT_N_MAX,
    ConnectionTiling,
    connection_is_valid,
    enumerate_merges,
    enumerate_tilings,
)
from .core import (
    ClusterCombination,
    Measurement,
    MeasurementSequence,
    SensorKind,
    combination_from_mask,
    init_clusters,
    split_measurements,
    to_ns,
)
from .errors import NoConnectedCandidateError, PipelineError
from .graph import (
    EMPTY,
    FactorGraph,
    GraphStats,
    build_candidate,
    compose,
    compression_pct,
    graph_stats,
    is_connected,
    prune_unanchored,
)
from .metrics import (
    LocalMom,
    MomParams,
    TimeShiftReport,
    Trajectory,
    local_mom,
    rpe_rmse,
    total_time_shift,
)
from .solver import initialize, optimize, residual

log = logging.getLogger(__name__)


class Scenario(str, enum.Enum):
    BASE = "base"
    MIN_TIME_SHIFT = "min_time_shift"
    MIN_SOLVER_ERROR = "min_solver_error"
    MOM = "mom_based"

    @classmethod
    def parse(cls, name: str | "Scenario") -> "Scenario":
        if isinstance(name, cls):
            return name
        key = str(name).strip().lower().replace("-", "_")
        aliases = {"mom": cls.MOM, "ours": cls.MOM}
        return aliases.get(key) or cls(key)


@dataclass(frozen=True)
class PipelineConfig:
    window_seconds: float = 1.0
    window_lead: float = 0.01
    n_max: int = DEFAULT_N_MAX
    workers: int = 1
    mom: MomParams = MomParams()
    mom_history_epochs: int = 2
    relinearize_epochs: int = 3
    tie_abs: float = 1e-12
    tie_rel: float = 1e-9
    evaluate_all_metrics: bool = True
    # mom_based only: drop candidates holding a factor whose whitened squared
    # residual exceeds this bound (None disables the gate)
    consistency_gate: Optional[float] = 13.8
    # relative band within which MOM scores count as tied (then fewer vertices wins)
    mom_tie_rel: float = 0.05


@dataclass(frozen=True, eq=False)
class Candidate:
    candidate_id: int
    comb: ClusterCombination
    tiling: ConnectionTiling
    graph: FactorGraph
    connected: bool
    excluded: tuple = ()

    @property
    def vertices(self) -> int:
        return len(self.graph.variables)

    @property
    def sort_key(self) -> tuple:
        return (self.vertices, self.comb.combination_id, self.tiling.intervals)


@dataclass(frozen=True, eq=False)
class Evaluation:
    candidate: Candidate
    solved: Optional[FactorGraph] = None
    time_shift: Optional[TimeShiftReport] = None
    solver_error: Optional[float] = None
    iterations: int = 0
    mom: Optional[LocalMom] = None
    max_factor_chi2: float = 0.0


@dataclass(frozen=True)
class CandidateRow:
    candidate_id: int
    combination_id: int
    tiling: tuple
    connected: bool
    vertices: int
    factors: int
    time_shift: Optional[float]
    solver_error: Optional[float]
    mom: Optional[float]


@dataclass(frozen=True, eq=False)
class EpochResult:
    epoch: int
    chosen_candidate_id: int
    stats: GraphStats
    time_shift: TimeShiftReport
    solver_error: float
    mom: Optional[float]
    candidates: list
    dropped_loop_count: int
    excluded_measurements: int
    mom_fallback: bool
    wall_time: float


# --------------------------------------------------------------------------- epochs


def split_epochs(seq: MeasurementSequence | Sequence[Measurement], config: PipelineConfig) -> list[list]:
    """Fixed windows starting ``window_lead`` before the first scan arrival."""
    items = list(seq)
    scans = [m.t_ns for m in items if m.kind is SensorKind.SCAN]
    cores = [m.t_ns for m in items if m.role.value == "core"]
    if not cores:
        return []
    t0 = (scans[0] if scans else cores[0]) - to_ns(config.window_lead)
    width = to_ns(config.window_seconds)
    buckets: dict = {}
    for m in items:
        if m.t_ns < t0:
            continue
        buckets.setdefault((m.t_ns - t0) // width, []).append(m)
    return [buckets[k] for k in sorted(buckets)]


def base_tiling(comb: ClusterCombination, continuous: Sequence[Measurement]) -> ConnectionTiling:
    """Adjacent connections over every gap that holds continuous samples."""
    ts = [c.t_ns for c in comb.clusters]
    samples = [m.t_ns for m in continuous]
    return ConnectionTiling(
        tuple(
            (i, i + 1)
            for i in range(len(ts) - 1)
            if connection_is_valid(ts[i], ts[i + 1], samples)
        )
    )


def generate_candidates(
    prev: FactorGraph,
    seq: Sequence[Measurement],
    scenario: Scenario,
    config: PipelineConfig,
    anchor: Optional[np.ndarray] = None,
) -> list[Candidate]:
    core, continuous = split_measurements(seq)
    if scenario is Scenario.BASE:
        comb = init_clusters(core)
        tiling = base_tiling(comb, continuous)
        g = build_candidate(prev, comb, tiling, continuous, anchor)
        g, excluded = prune_unanchored(g, prev)
        return [Candidate(0, comb, tiling, g, bool(g.variables) and is_connected(g), tuple(excluded))]

    out: list[Candidate] = []
    cache: dict = {}
    for mask in enumerate_merges(len(core), config.n_max):
        comb = combination_from_mask(core, mask.value)
        if not comb.is_strictly_ordered:
            continue
        for tiling in enumerate_tilings(comb, continuous) or [ConnectionTiling(())]:
            g = build_candidate(prev, comb, tiling, continuous, anchor, cache)
            out.append(Candidate(len(out), comb, tiling, g, is_connected(g)))
    return out


# --------------------------------------------------------------------------- map


def scan_points(graph: FactorGraph, var_ids: Iterable[int], states: Optional[dict] = None) -> np.ndarray:
    chunks = []
    for vid in var_ids:
        v = graph.variables[vid]
        pose = v.state if states is None else states[vid]
        for m in v.members:
            if m.kind is SensorKind.SCAN and m.payload.points.size:
                chunks.append(se2.transform_points(pose, m.payload.points))
    return np.concatenate(chunks) if chunks else np.zeros((0, 3))


def _recent_map(prev: FactorGraph, epochs: int) -> np.ndarray:
    if not prev.variables or epochs <= 0:
        return np.zeros((0, 3))
    recent = prev.variables_in_epochs(range(prev.epochs - epochs, prev.epochs))
    return scan_points(prev, sorted(recent))


def submap(new_points: np.ndarray, existing: np.ndarray, radius: float) -> np.ndarray:
    """New points plus the existing points that overlap them."""
    if existing.shape[0] == 0 or new_points.shape[0] == 0:
        return new_points
    d, _ = cKDTree(new_points).query(existing, k=1, distance_upper_bound=radius)
    return np.concatenate([new_points, existing[np.isfinite(d)]])


# --------------------------------------------------------------------------- evaluation


def evaluate_candidate(
    cand: Candidate,
    prev: FactorGraph,
    existing_map: np.ndarray,
    want_mom: bool,
    config: PipelineConfig,
) -> Evaluation:
    g = cand.graph
    known = {v: prev.variables[v].state for v in g.external_vars}
    initial = initialize(g, known)
    sol, err, iters = optimize(g, initial, epoch=prev.epochs)
    solved = g.with_states(sol)
    states = {**initial, **sol}
    worst = max(
        [g.dropped_loop_chi2]
        + [float(r @ r) for r in (residual(f, states)[0] for f in g.factors.values())]
    )
    shift = total_time_shift(g, cand.comb)
    lm = None
    if want_mom:
        pts = scan_points(solved, sorted(solved.variables))
        lm = local_mom(submap(pts, existing_map, config.mom.radius), config.mom)
    return Evaluation(cand, solved, shift, err, iters, lm, worst)


def select_best(scored: Sequence[tuple], tie_abs: float = 0.0, tie_rel: float = 0.0):
    """Minimum score; near-ties go to fewer vertices, lower combination id, then tiling.

    ``scored`` holds ``(candidate, score)`` pairs; candidates need a ``sort_key``.
    """
    if not scored:
        raise ValueError("nothing to select from")
    finite = [s for _, s in scored if not math.isnan(s)]
    low = min(finite) if finite else math.inf
    tol = tie_abs + tie_rel * abs(low) if math.isfinite(low) else 0.0
    tied = [c for c, s in scored if s <= low + tol or (math.isinf(low) and s == low)]
    if not tied:
        tied = [c for c, _ in scored]
    return min(tied, key=lambda c: c.sort_key)


def _score(ev: Evaluation, scenario: Scenario) -> float:
    if scenario is Scenario.MIN_TIME_SHIFT:
        return ev.time_shift.total
    if scenario is Scenario.MOM:
        return ev.mom.value if ev.mom is not None and ev.mom.applicable else math.inf
    return ev.solver_error


def run_epoch(
    prev: FactorGraph,
    seq: Sequence[Measurement],
    scenario: Scenario | str,
    config: PipelineConfig = PipelineConfig(),
    anchor: Optional[np.ndarray] = None,
) -> tuple[FactorGraph, EpochResult]:
    scenario = Scenario.parse(scenario)
    start = time.perf_counter()
    epoch = prev.epochs
    cands = generate_candidates(prev, seq, scenario, config, anchor)
    connected = [c for c in cands if c.connected]
    if not connected:
        raise NoConnectedCandidateError(
            epoch,
            {
                "candidates": len(cands),
                "core": sum(1 for m in seq if m.role.value == "core"),
                "continuous": sum(1 for m in seq if m.role.value == "continuous"),
            },
        )

    want_mom = scenario is Scenario.MOM or config.evaluate_all_metrics
    existing = _recent_map(prev, config.mom_history_epochs) if want_mom else None

    def work(c: Candidate) -> Evaluation:
        return evaluate_candidate(c, prev, existing, want_mom, config)

    if config.workers > 1 and len(connected) > 1:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            evals = list(pool.map(work, connected))
    else:
        evals = [work(c) for c in connected]

    pool_evals = evals
    if scenario is Scenario.MOM and config.consistency_gate is not None:
        gated = [e for e in evals if e.max_factor_chi2 <= config.consistency_gate]
        pool_evals = gated or evals

    fallback = False
    effective = scenario
    if scenario is Scenario.MOM and not any(e.mom is not None and e.mom.applicable for e in pool_evals):
        log.warning("epoch %d: MOM not applicable to any candidate; using solver error", epoch)
        effective, fallback = Scenario.MIN_SOLVER_ERROR, True
    by_id = {e.candidate.candidate_id: e for e in evals}
    tie_rel = config.tie_rel
    if effective is Scenario.MOM:
        tie_rel = max(tie_rel, config.mom_tie_rel)
    best_c = select_best(
        [(e.candidate, _score(e, effective)) for e in pool_evals], config.tie_abs, tie_rel
    )
    best = by_id[best_c.candidate_id]

    g_t = compose(prev, best.solved)
    g_t = resolve_horizon(g_t, config.relinearize_epochs)

    rows = []
    for c in cands:
        e = by_id.get(c.candidate_id)
        rows.append(
            CandidateRow(
                c.candidate_id,
                c.comb.combination_id,
                c.tiling.intervals,
                c.connected,
                c.vertices,
                len(c.graph.factors),
                None if e is None else e.time_shift.total,
                None if e is None else e.solver_error,
                None if e is None or e.mom is None else e.mom.value,
            )
        )
    result = EpochResult(
        epoch=epoch,
        chosen_candidate_id=best_c.candidate_id,
        stats=graph_stats(best.solved),
        time_shift=best.time_shift,
        solver_error=best.solver_error,
        mom=None if best.mom is None or not best.mom.applicable else best.mom.value,
        candidates=rows,
        dropped_loop_count=best.solved.dropped_loops,
        excluded_measurements=len(best_c.excluded),
        mom_fallback=fallback,
        wall_time=time.perf_counter() - start,
    )
    return g_t, result


def resolve_horizon(g: FactorGraph, epochs: int) -> FactorGraph:
    """Re-optimise the newest ``epochs`` epochs with older states frozen."""
    if epochs <= 0 or not g.variables:
        return g
    free = g.variables_in_epochs(range(g.epochs - epochs, g.epochs))
    if not free:
        return g
    sol, _, _ = optimize(g, g.states(), free=free, epoch=g.epochs - 1)
    return g.with_states(sol)


# --------------------------------------------------------------------------- trajectory


@dataclass(frozen=True, eq=False)
class TrajectoryReport:
    scenario: Scenario
    total_time_shift: float
    solver_error: float
    rpe_m: Optional[float]
    rpe_deg: Optional[float]
    clusters: int
    vertices: int
    factors: int
    compression_pct: Optional[float]
    total_mom: float
    dropped_loops: int
    excluded_measurements: int
    mom_fallback_epochs: list
    epochs: list
    graph: FactorGraph
    config: dict = field(default_factory=dict)

    TABLE_ROWS = (
        "total_time_shift",
        "solver_error",
        "rpe_m",
        "rpe_deg",
        "clusters",
        "vertices",
        "factors",
        "compression_pct",
    )

    def table(self) -> dict:
        return {k: getattr(self, k) for k in self.TABLE_ROWS}

    def estimated_trajectory(self) -> Trajectory:
        return graph_trajectory(self.graph)


def graph_trajectory(g: FactorGraph) -> Trajectory:
    order = sorted(g.variables.values(), key=lambda v: (v.t_ns, v.var_id))
    return Trajectory([v.timestamp for v in order], [v.state for v in order])


def config_snapshot(config: PipelineConfig) -> dict:
    return asdict(config)


def run_trajectory(
    stream: MeasurementSequence | Sequence[Measurement],
    scenario: Scenario | str,
    config: PipelineConfig = PipelineConfig(),
    truth: Optional[Trajectory] = None,
    base_factors: Optional[int] = None,
) -> TrajectoryReport:
    scenario = Scenario.parse(scenario)
    epochs = split_epochs(stream, config)
    if not epochs:
        raise PipelineError("stream yields no epoch with core measurements")
    if not any(m.kind is SensorKind.GPS for m in stream):
        log.warning("no unary constraints: stream has no position measurements")

    g = EMPTY
    results: list[EpochResult] = []
    for k, items in enumerate(epochs):
        if not any(m.role.value == "core" for m in items):
            continue
        anchor = None
        if not g.variables:
            first = min(m.t_ns for m in items if m.role.value == "core")
            anchor = truth.at(first / 1e9) if truth is not None else np.zeros(3)
        try:
            g, res = run_epoch(g, items, scenario, config, anchor)
        except PipelineError as exc:
            raise PipelineError(f"epoch {k}: {exc}") from exc
        results.append(res)

    stats = graph_stats(g)
    if scenario is Scenario.BASE:
        compression = 0.0
    else:
        if base_factors is None:
            base_factors = run_trajectory(stream, Scenario.BASE, config, truth).factors
        compression = compression_pct(stats.factors, base_factors)

    rpe_m = rpe_deg = None
    if truth is not None and len(g.variables) >= 2:
        tr, rot = rpe_rmse(graph_trajectory(g), truth)
        rpe_m, rpe_deg = tr, math.degrees(rot)

    return TrajectoryReport(
        scenario=scenario,
        total_time_shift=sum(r.time_shift.total for r in results),
        solver_error=sum(r.solver_error for r in results),
        rpe_m=rpe_m,
        rpe_deg=rpe_deg,
        clusters=stats.clusters,
        vertices=stats.vertices,
        factors=stats.factors,
        compression_pct=compression,
        total_mom=sum(r.mom for r in results if r.mom is not None),
        dropped_loops=g.dropped_loops,
        excluded_measurements=sum(r.excluded_measurements for r in results),
        mom_fallback_epochs=[r.epoch for r in results if r.mom_fallback],
        epochs=results,
        graph=g,
        config=config_snapshot(config),
    )
