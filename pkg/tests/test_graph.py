import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fgsync.combinatorics import ConnectionTiling, enumerate_merges, enumerate_tilings
from fgsync.core import SensorKind, combination_from_mask, init_clusters, split_measurements
from fgsync.errors import PipelineError
from fgsync.graph import (
    EMPTY,
    FactorKind,
    build_candidate,
    compose,
    compression_pct,
    dump_graph,
    graph_stats,
    is_connected,
    parse_graph_dump,
    prune_unanchored,
)
from fgsync.pipeline import PipelineConfig, Scenario, run_epoch

from conftest import gps, imu, scan, union_find_connected

STEP = np.array([0.5, 0.0, 0.0])


def _kinds(g):
    return sorted(f.kind.value for f in g.factors.values())


def test_single_gps_graph():
    g = build_candidate(EMPTY, init_clusters([gps(1.0)]), ConnectionTiling(()), [], anchor=None)
    assert len(g.variables) == 1
    assert _kinds(g) == ["anchor", "prior_position"]
    assert is_connected(g)


def test_gps_attaches_to_shared_scan_pose():
    # first epoch: anchor on lidar1; GPS arrives 10 ms after lidar2
    core = [scan("l1", 0.0), scan("l2", 0.1), gps(0.11)]
    comb = combination_from_mask(core, 0b10)
    g = build_candidate(EMPTY, comb, ConnectionTiling(((0, 1),)), [imu(0.05)])
    shared = [v for v in g.variables.values() if len(v.members) == 2]
    assert len(shared) == 1
    gps_f = [f for f in g.factors.values() if f.kind is FactorKind.PRIOR_POSITION]
    assert gps_f[0].var_ids == (shared[0].var_id,)
    assert shared[0].timestamp == pytest.approx(0.1)


def test_same_sensor_merge_drops_loop():
    prev = build_candidate(EMPTY, init_clusters([scan("l1", 0.0)]), ConnectionTiling(()), [])
    core = [scan("l1", 1.0, STEP), scan("l1", 1.02, np.array([0.01, 0.0, 0.0]))]
    g = build_candidate(prev, combination_from_mask(core, 1), ConnectionTiling(()), [])
    assert g.dropped_loops == 1
    # the first scan still chains to the previous epoch
    assert _kinds(g) == ["odometry"]
    # odometry of 1 cm against identity, whitened by sigma 1 cm
    assert g.dropped_loop_chi2 == pytest.approx(1.0, rel=1e-9)


def test_fig2_isolated_gps_pose_is_disconnected():
    core = [scan("l1", 0.0), gps(0.5), scan("l1", 1.0, STEP)]
    g = build_candidate(EMPTY, init_clusters(core), ConnectionTiling(()), [])
    assert not is_connected(g)
    pruned, excluded = prune_unanchored(g)
    assert is_connected(pruned)
    assert [m.kind for m in excluded] == [SensorKind.GPS]


def test_fig4_two_chains_through_shared_start_are_connected():
    core = [scan("l1", 0.0), scan("l2", 0.0)]
    g0 = build_candidate(EMPTY, combination_from_mask(core, 1), ConnectionTiling(()), [])
    core = [scan("l1", 0.5, STEP), scan("l2", 0.6, STEP), scan("l1", 1.0, STEP), scan("l2", 1.1, STEP)]
    g1 = build_candidate(g0, init_clusters(core), ConnectionTiling(()), [])
    assert is_connected(g1)
    assert is_connected(compose(g0, g1), anchored_to_prev=False)


def test_candidate_not_touching_prev_is_disconnected():
    g0 = build_candidate(EMPTY, init_clusters([scan("l1", 0.0)]), ConnectionTiling(()), [])
    g1 = build_candidate(g0, init_clusters([gps(1.0)]), ConnectionTiling(()), [])
    assert not is_connected(g1)
    assert is_connected(g1, anchored_to_prev=False)


def test_empty_graph_connectivity_undefined():
    with pytest.raises(ValueError):
        is_connected(EMPTY)


@st.composite
def epochs(draw):
    """Random first epoch or a continuation with imu dropout."""
    n = draw(st.integers(1, 6))
    kinds = draw(st.lists(st.sampled_from(["l1", "l2", "gps"]), min_size=n, max_size=n))
    ts = np.cumsum(draw(st.lists(st.floats(0.01, 0.3), min_size=n, max_size=n)))
    core = [gps(float(t)) if k == "gps" else scan(k, float(t), STEP) for k, t in zip(kinds, ts)]
    imu_t = draw(st.lists(st.floats(0.0, float(ts[-1])), max_size=6))
    cont = sorted((imu(float(t)) for t in imu_t), key=lambda m: m.t_ns)
    with_prev = draw(st.booleans())
    return core, cont, with_prev


@settings(max_examples=80, deadline=None)
@given(epochs())
def test_is_connected_matches_union_find(ep):
    core, cont, with_prev = ep
    prev = EMPTY
    if with_prev:
        prev = build_candidate(EMPTY, init_clusters([scan("l1", -0.5), scan("l2", -0.4)]), ConnectionTiling(()), [])
    for mask in enumerate_merges(len(core)):
        comb = combination_from_mask(core, mask.value)
        for tiling in enumerate_tilings(comb, cont) or [ConnectionTiling(())]:
            g = build_candidate(prev, comb, tiling, cont)
            for anchored in (True, False):
                assert is_connected(g, anchored) == union_find_connected(g, anchored)
            # conservation of core measurements
            n_gps = sum(m.kind is SensorKind.GPS for m in core)
            n_scan = len(core) - n_gps
            kinds = [f.kind for f in g.factors.values()]
            assert kinds.count(FactorKind.PRIOR_POSITION) == n_gps
            assert kinds.count(FactorKind.ODOMETRY) + g.dropped_loops + g.chain_starts == n_scan
            # every continuous sample lands in at most one connection
            ts = [c.t_ns for c in comb.clusters]
            used = [
                m for i, j in tiling.intervals for m in cont if ts[i] < m.t_ns < ts[j]
            ]
            assert len(used) == len({id(m) for m in used})
            assert g.unused_continuous == len(cont) - len(used)


def _three_epochs():
    cfg = PipelineConfig(evaluate_all_metrics=False)
    batches = [
        [scan("l1", 0.0), imu(0.1), gps(0.2), imu(0.3), scan("l1", 0.5, STEP)],
        [imu(0.6), scan("l1", 1.0, STEP), imu(1.2), gps(1.3)],
        [imu(1.6), scan("l1", 1.5, STEP), imu(1.7), scan("l1", 2.0, STEP)],
    ]
    batches[2].sort(key=lambda m: m.t_ns)
    return cfg, batches


def test_sequential_epochs_bookkeeping():
    cfg, batches = _three_epochs()
    g = EMPTY
    clusters = 0
    for b in batches:
        g, res = run_epoch(g, b, Scenario.BASE, cfg, anchor=np.zeros(3))
        clusters += res.stats.clusters
        assert is_connected(g, anchored_to_prev=False)
    assert len(g.variables) == clusters == 7
    assert len(set(g.variables)) == len(g.variables)


def test_compose_identity_and_associativity():
    cfg, batches = _three_epochs()
    parts = []
    g = EMPTY
    for b in batches:
        core, cont = split_measurements(b)
        comb = init_clusters(core)
        tiling = enumerate_tilings(comb, cont)
        cand = build_candidate(g, comb, tiling[0] if tiling else ConnectionTiling(()), cont, np.zeros(3))
        parts.append(cand)
        g = compose(g, cand)
    a, b, c = parts
    assert set(compose(EMPTY, a).variables) == set(a.variables)
    left = compose(compose(a, b), c)
    right = compose(a, compose(b, c))
    assert set(left.variables) == set(right.variables)
    assert set(left.factors) == set(right.factors)
    assert left.last_scan_var == right.last_scan_var
    assert len(compose(a, b).variables) == len(a.variables) + len(b.variables)
    with pytest.raises(PipelineError):
        compose(a, a)


def test_stats_and_compression():
    assert tuple(vars(graph_stats(EMPTY)).values()) == (0, 0, 0)
    assert compression_pct(70, 100) == pytest.approx(30.0)
    assert compression_pct(110, 100) == pytest.approx(-10.0)


def test_dump_round_trip():
    cfg, batches = _three_epochs()
    g = EMPTY
    for b in batches:
        g, _ = run_epoch(g, b, Scenario.BASE, cfg, anchor=np.zeros(3))
    text = dump_graph(g, comments=["fixture"])
    vs, fs = parse_graph_dump(text)
    assert [v["id"] for v in vs] == sorted(g.variables)
    assert [f["id"] for f in fs] == sorted(g.factors)
    for v in vs:
        node = g.variables[v["id"]]
        assert np.array_equal(v["state"], node.state)
        assert v["t_ns"] == node.t_ns
    assert dump_graph(g, comments=["fixture"]) == text


def test_pruned_chain_falls_back_to_kept_pose():
    g0 = build_candidate(EMPTY, init_clusters([scan("l1", 0.0)]), ConnectionTiling(()), [])
    # lidar2 starts its chain on an unanchored pose, which gets pruned
    core = [scan("l2", 0.4), scan("l1", 0.5, STEP)]
    g1 = build_candidate(g0, init_clusters(core), ConnectionTiling(()), [])
    pruned, excluded = prune_unanchored(g1, g0)
    assert len(excluded) == 1
    assert "l2" not in pruned.last_scan_var
    assert pruned.last_scan_var["l1"] in pruned.variables
