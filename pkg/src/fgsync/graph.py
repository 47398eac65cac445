"""Bipartite factor graphs: candidate construction, connectivity, composition."""

from __future__ import annotations

import enum
from collections import deque
from dataclasses import dataclass, field, replace
from typing import Iterable, Optional, Sequence

import numpy as np

from . import se2
from .combinatorics import ConnectionTiling
from .core import ClusterCombination, Measurement, SensorKind
from .errors import DataError, PipelineError
from .preintegration import preintegrate

ANCHOR_SIGMA = 1e-4


class FactorKind(str, enum.Enum):
    PRIOR_POSITION = "prior_position"
    ODOMETRY = "odometry"
    PREINTEGRATED_MOTION = "preintegrated_motion"
    ANCHOR = "anchor"  # full-pose prior fixing the gauge of the first epoch


UNARY_KINDS = frozenset({FactorKind.PRIOR_POSITION, FactorKind.ANCHOR})


def inverse_sqrt(cov: np.ndarray) -> np.ndarray:
    """Symmetric inverse square root of an SPD matrix."""
    w, v = np.linalg.eigh(cov)
    if w.min() <= 0:
        raise DataError("factor covariance is not positive definite")
    return (v / np.sqrt(w)) @ v.T


# sensor covariances repeat across thousands of candidate factors
_SQRT_INFO: dict = {}


def _sqrt_info(cov: np.ndarray) -> np.ndarray:
    key = cov.tobytes()
    W = _SQRT_INFO.get(key)
    if W is None:
        if np.abs(cov - cov.T).max() > 1e-12 * (1.0 + np.abs(cov).max()):
            raise DataError("factor covariance is not symmetric")
        if len(_SQRT_INFO) > 4096:
            _SQRT_INFO.clear()
        W = _SQRT_INFO[key] = inverse_sqrt(cov)
        W.flags.writeable = False
    return W


@dataclass(frozen=True, eq=False)
class VariableNode:
    var_id: int
    t_ns: int
    epoch: int
    members: tuple = ()
    state: Optional[np.ndarray] = None

    @property
    def timestamp(self) -> float:
        return self.t_ns / 1e9

    def with_state(self, state: np.ndarray) -> "VariableNode":
        return replace(self, state=np.array(state, dtype=float))


@dataclass(frozen=True, eq=False)
class FactorNode:
    factor_id: int
    kind: FactorKind
    var_ids: tuple
    measurement: np.ndarray
    covariance: np.ndarray
    epoch: int = 0
    time_shift: float = 0.0
    sqrt_info: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        kind = FactorKind(self.kind)
        object.__setattr__(self, "kind", kind)
        if (len(self.var_ids) == 1) != (kind in UNARY_KINDS) or len(self.var_ids) > 2:
            raise ValueError(f"{kind.value} factor with {len(self.var_ids)} variables")
        if len(self.var_ids) == 2 and self.var_ids[0] == self.var_ids[1]:
            raise ValueError("factor connects a variable to itself")
        cov = np.asarray(self.covariance, dtype=float)
        object.__setattr__(self, "covariance", cov)
        object.__setattr__(self, "measurement", np.asarray(self.measurement, dtype=float))
        if self.sqrt_info is None:
            object.__setattr__(self, "sqrt_info", _sqrt_info(cov))

    @property
    def dim(self) -> int:
        return self.measurement.shape[0]


@dataclass(frozen=True, eq=False)
class FactorGraph:
    """Variables and factors; edges are implied by ``FactorNode.var_ids``.

    A candidate built against a previous graph holds only the new nodes;
    its factors may reference previous variables that it does not own.
    """

    variables: dict = field(default_factory=dict)
    factors: dict = field(default_factory=dict)
    last_scan_var: dict = field(default_factory=dict)
    next_var_id: int = 0
    next_factor_id: int = 0
    epochs: int = 0
    parent_size: int = 0
    dropped_loops: int = 0
    chain_starts: int = 0
    unused_continuous: int = 0
    # largest whitened squared error of a dropped self-loop against identity
    dropped_loop_chi2: float = 0.0

    @property
    def edges(self) -> list[tuple]:
        return [(v, f.factor_id) for f in self.factors.values() for v in f.var_ids]

    @property
    def external_vars(self) -> set:
        return {v for f in self.factors.values() for v in f.var_ids} - set(self.variables)

    def states(self) -> dict:
        return {k: v.state for k, v in self.variables.items() if v.state is not None}

    def with_states(self, states: dict) -> "FactorGraph":
        variables = {
            k: (v.with_state(states[k]) if k in states else v)
            for k, v in self.variables.items()
        }
        return replace(self, variables=variables)

    def variables_in_epochs(self, epochs: Iterable[int]) -> set:
        wanted = set(epochs)
        return {k for k, v in self.variables.items() if v.epoch in wanted}

    def __len__(self) -> int:
        return len(self.variables) + len(self.factors)


EMPTY = FactorGraph()


def build_candidate(
    prev: FactorGraph,
    comb: ClusterCombination,
    tiling: ConnectionTiling,
    continuous: Sequence[Measurement],
    anchor: Optional[np.ndarray] = None,
    preint_cache: Optional[dict] = None,
) -> FactorGraph:
    """Nodes and factors that one topology hypothesis adds on top of ``prev``.

    ``anchor`` is the pose prior placed on the first variable when ``prev``
    is empty; it is ignored otherwise. Candidates of one epoch may share a
    ``preint_cache`` keyed by connection end times, since they share the
    same ``continuous`` samples.
    """
    epoch = prev.epochs
    vid0, fid = prev.next_var_id, prev.next_factor_id
    variables: dict = {}
    factors: dict = {}
    last_scan = dict(prev.last_scan_var)
    dropped = chain_starts = 0
    loop_chi2 = 0.0

    def add(kind, var_ids, z, cov, shift=0.0):
        nonlocal fid
        factors[fid] = FactorNode(fid, kind, tuple(var_ids), z, cov, epoch, shift)
        fid += 1

    for k, cluster in enumerate(comb.clusters):
        vid = vid0 + k
        variables[vid] = VariableNode(vid, cluster.t_ns, epoch, cluster.members)
        if k == 0 and not prev.variables:
            z = np.zeros(3) if anchor is None else np.asarray(anchor, dtype=float)
            add(FactorKind.ANCHOR, (vid,), z, np.eye(3) * ANCHOR_SIGMA**2)
        for m in cluster.members:
            if m.kind is SensorKind.GPS:
                add(FactorKind.PRIOR_POSITION, (vid,), m.payload.position, m.noise_covariance)
            elif m.kind is SensorKind.SCAN:
                before = last_scan.get(m.sensor_id)
                last_scan[m.sensor_id] = vid
                if m.payload.odometry is None or before is None:
                    chain_starts += 1
                elif before == vid:
                    dropped += 1
                    r = inverse_sqrt(m.noise_covariance) @ se2.log(m.payload.odometry)
                    loop_chi2 = max(loop_chi2, float(r @ r))
                else:
                    add(FactorKind.ODOMETRY, (before, vid), m.payload.odometry, m.noise_covariance)
            else:
                raise DataError(f"{m!r} is not a core measurement")

    used = 0
    for i, j in tiling.intervals:
        ci, cj = comb.clusters[i], comb.clusters[j]
        samples = [m for m in continuous if ci.t_ns < m.t_ns < cj.t_ns]
        if not samples:
            raise DataError(f"connection ({i}, {j}) spans no continuous measurement")
        key = (ci.t_ns, cj.t_ns)
        pre = None if preint_cache is None else preint_cache.get(key)
        if pre is None:
            pre = preintegrate(samples, ci.timestamp, cj.timestamp)
            if preint_cache is not None:
                preint_cache[key] = pre
        add(
            FactorKind.PREINTEGRATED_MOTION,
            (vid0 + i, vid0 + j),
            pre.relative_pose,
            pre.covariance,
            pre.first_sample_shift,
        )
        used += len(samples)

    return FactorGraph(
        variables=variables,
        factors=factors,
        last_scan_var=last_scan,
        next_var_id=vid0 + len(comb.clusters),
        next_factor_id=fid,
        epochs=epoch + 1,
        parent_size=len(prev.variables),
        dropped_loops=dropped,
        chain_starts=chain_starts,
        unused_continuous=len(continuous) - used,
        dropped_loop_chi2=loop_chi2,
    )


_SUPER = ("prev",)


def _adjacency(g: FactorGraph, anchored_to_prev: bool) -> dict:
    adj: dict = {("v", v): [] for v in g.variables}
    if anchored_to_prev and g.parent_size:
        adj[_SUPER] = []
    for f in g.factors.values():
        fnode = ("f", f.factor_id)
        adj[fnode] = []
        for v in f.var_ids:
            if v in g.variables:
                vnode = ("v", v)
            elif anchored_to_prev:
                vnode = _SUPER
            else:
                vnode = ("x", v)
            adj.setdefault(vnode, [])
            adj[fnode].append(vnode)
            adj[vnode].append(fnode)
    return adj


def components(g: FactorGraph, anchored_to_prev: bool = True) -> list[set]:
    adj = _adjacency(g, anchored_to_prev)
    seen: set = set()
    out = []
    for start in adj:
        if start in seen:
            continue
        comp = {start}
        queue = deque([start])
        while queue:
            for nb in adj[queue.popleft()]:
                if nb not in comp:
                    comp.add(nb)
                    queue.append(nb)
        seen |= comp
        out.append(comp)
    return out


def is_connected(g: FactorGraph, anchored_to_prev: bool = True) -> bool:
    """One connected component over the bipartite incidence graph.

    With ``anchored_to_prev`` every variable of the previous graph is
    contracted into one node, which is present whenever the candidate was
    built on a non-empty graph, so a candidate that never touches the past
    counts as disconnected.
    """
    if not g.variables and not g.factors:
        raise ValueError("connectivity of an empty graph is undefined")
    return len(components(g, anchored_to_prev)) == 1


def prune_unanchored(g: FactorGraph, prev: Optional[FactorGraph] = None) -> tuple[FactorGraph, list]:
    """Keep only the component holding the anchor or the previous graph.

    Returns the pruned candidate and the measurements that were excluded.
    Scan chains whose newest pose was dropped fall back to the newest kept
    pose of that sensor, or to the one recorded in ``prev``.
    """
    comps = components(g, anchored_to_prev=True)
    if len(comps) == 1:
        return g, []
    anchor_ids = {("f", f.factor_id) for f in g.factors.values() if f.kind is FactorKind.ANCHOR}
    keep = next((c for c in comps if _SUPER in c or c & anchor_ids), set())
    kept_vars = {n[1] for n in keep if n[0] == "v"}
    kept_factors = {n[1] for n in keep if n[0] == "f"}
    excluded = [m for v, node in g.variables.items() if v not in kept_vars for m in node.members]
    last_scan = dict(prev.last_scan_var) if prev is not None else {}
    for vid in sorted(kept_vars, key=lambda k: g.variables[k].t_ns):
        for m in g.variables[vid].members:
            if m.kind is SensorKind.SCAN:
                last_scan[m.sensor_id] = vid
    pruned = replace(
        g,
        variables={k: v for k, v in g.variables.items() if k in kept_vars},
        factors={k: f for k, f in g.factors.items() if k in kept_factors},
        last_scan_var=last_scan,
    )
    return pruned, excluded


def compose(prev: FactorGraph, best: FactorGraph) -> FactorGraph:
    if set(prev.variables) & set(best.variables) or set(prev.factors) & set(best.factors):
        raise PipelineError("variable or factor id collision while composing graphs")
    return FactorGraph(
        variables={**prev.variables, **best.variables},
        factors={**prev.factors, **best.factors},
        last_scan_var=dict(best.last_scan_var) if best.epochs else dict(prev.last_scan_var),
        next_var_id=max(prev.next_var_id, best.next_var_id),
        next_factor_id=max(prev.next_factor_id, best.next_factor_id),
        epochs=max(prev.epochs, best.epochs),
        parent_size=prev.parent_size,
        dropped_loops=prev.dropped_loops + best.dropped_loops,
        chain_starts=prev.chain_starts + best.chain_starts,
        unused_continuous=prev.unused_continuous + best.unused_continuous,
        dropped_loop_chi2=max(prev.dropped_loop_chi2, best.dropped_loop_chi2),
    )


@dataclass(frozen=True)
class GraphStats:
    clusters: int
    vertices: int
    factors: int


def graph_stats(g: FactorGraph) -> GraphStats:
    # one pose per cluster, so clusters and vertices coincide
    return GraphStats(len(g.variables), len(g.variables), len(g.factors))


def compression_pct(factors: int, factors_base: int) -> float:
    return 100.0 * (1.0 - factors / factors_base)


GRAPH_HEADER = "# fgsync-graph v1"


def dump_graph(g: FactorGraph, comments: Iterable[str] = ()) -> str:
    """Line-oriented dump, one variable or factor per line, sorted by id."""
    lines = [GRAPH_HEADER] + [f"# {c}" for c in comments]
    for vid in sorted(g.variables):
        v = g.variables[vid]
        state = "-" if v.state is None else " ".join(repr(float(x)) for x in v.state)
        members = ",".join(f"{m.sensor_id}@{m.t_ns}" for m in v.members)
        lines.append(f"V {vid} pose {v.epoch} {v.t_ns} {state} {members}")
    for fid in sorted(g.factors):
        f = g.factors[fid]
        ends = ",".join(str(v) for v in f.var_ids)
        lines.append(f"F {fid} {f.kind.value} {f.epoch} {ends} {f.time_shift!r}")
    return "\n".join(lines) + "\n"


def parse_graph_dump(text: str) -> tuple[list[dict], list[dict]]:
    lines = text.splitlines()
    if not lines or lines[0] != GRAPH_HEADER:
        raise DataError("not a graph dump (bad header)")
    variables, factors = [], []
    for n, line in enumerate(lines[1:], start=2):
        if line.startswith("#") or not line.strip():
            continue
        parts = line.split()
        try:
            if parts[0] == "V":
                state = None if parts[5] == "-" else [float(x) for x in parts[5:8]]
                variables.append(
                    {"id": int(parts[1]), "epoch": int(parts[3]), "t_ns": int(parts[4]), "state": state}
                )
            elif parts[0] == "F":
                factors.append(
                    {
                        "id": int(parts[1]),
                        "kind": FactorKind(parts[2]),
                        "epoch": int(parts[3]),
                        "vars": tuple(int(v) for v in parts[4].split(",")),
                        "time_shift": float(parts[5]),
                    }
                )
            else:
                raise ValueError(parts[0])
        except (IndexError, ValueError) as exc:
            raise DataError(f"graph dump line {n}: {exc}") from exc
    return variables, factors
