import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fgsync import se2
from fgsync.combinatorics import ConnectionTiling
from fgsync.core import combination_from_mask, init_clusters
from fgsync.errors import DataError
from fgsync.graph import EMPTY, build_candidate
from fgsync.metrics import MomParams, Trajectory, local_mom, mom, rpe_rmse, total_time_shift

from conftest import gps, imu, plane_points


def test_time_shift_zero_for_singletons():
    comb = init_clusters([gps(1.0), gps(2.0)])
    g = build_candidate(EMPTY, comb, ConnectionTiling(((0, 1),)), [imu(1.0 + 1e-9 * 0), imu(1.5)])
    rep = total_time_shift(g, comb)
    assert rep.T_time_range == 0.0


def test_time_shift_cluster_range():
    core = [gps(1.0), gps(1.1), gps(1.3)]
    comb = combination_from_mask(core, 0b11)
    g = build_candidate(EMPTY, comb, ConnectionTiling(()), [])
    rep = total_time_shift(g, comb)
    assert rep.T_time_range == pytest.approx(0.3)
    assert rep.total == rep.T_time_range + rep.T_delta_imu


def test_time_shift_first_sample_offset():
    comb = init_clusters([gps(2.0), gps(2.5)])
    g = build_candidate(EMPTY, comb, ConnectionTiling(((0, 1),)), [imu(2.05), imu(2.3)])
    rep = total_time_shift(g, comb)
    assert rep.T_delta_imu == pytest.approx(0.05)
    assert rep.total == pytest.approx(0.05)


def _line(n, step=1.0):
    return Trajectory(np.arange(n, dtype=float), [[step * k, 0.0, 0.0] for k in range(n)])


def test_rpe_identity():
    assert rpe_rmse(_line(4), _line(4)) == (0.0, 0.0)


def test_rpe_hand_computed():
    est = Trajectory([0.0, 1.0, 2.0], [[0, 0, 0], [1, 0, 0], [2.1, 0, 0]])
    trans, rot = rpe_rmse(est, _line(3))
    assert trans == pytest.approx(math.sqrt(0.01 / 2), rel=1e-12)
    assert rot == 0.0


def test_rpe_interpolates_reference():
    ref = Trajectory([0.0, 2.0], [[0, 0, 0], [2, 0, 0]])
    est = Trajectory([0.0, 1.0, 2.0], [[0, 0, 0], [1, 0, 0], [2, 0, 0]])
    assert rpe_rmse(est, ref) == pytest.approx((0.0, 0.0), abs=1e-15)


def test_rpe_needs_two_poses():
    with pytest.raises(ValueError):
        rpe_rmse(_line(1), _line(3))


pose_st = st.tuples(st.floats(-5, 5), st.floats(-5, 5), st.floats(-3, 3))


@settings(max_examples=50, deadline=None)
@given(st.lists(pose_st, min_size=2, max_size=6), st.lists(pose_st, min_size=6, max_size=6), pose_st)
def test_rpe_invariant_to_common_rigid_transform(ref_poses, noise, T):
    n = len(ref_poses)
    ref = [np.array(p) for p in ref_poses]
    est = [se2.compose(r, 0.05 * np.array(e)) for r, e in zip(ref, noise)]
    times = np.arange(n, dtype=float)
    T = np.array(T)
    a = rpe_rmse(Trajectory(times, est), Trajectory(times, ref))
    b = rpe_rmse(
        Trajectory(times, [se2.compose(T, p) for p in est]),
        Trajectory(times, [se2.compose(T, p) for p in ref]),
    )
    assert abs(a[0] - b[0]) < 1e-12 and abs(a[1] - b[1]) < 1e-12


@pytest.mark.parametrize("seed", range(20))
def test_mom_zero_on_exact_planes(seed):
    res = local_mom(plane_points(np.random.default_rng(seed)))
    assert res.applicable
    assert 0.0 <= res.value < 1e-12


def test_mom_grows_with_noise():
    values = [local_mom(plane_points(np.random.default_rng(3), 600, s)).value for s in (0.01, 0.02, 0.04)]
    assert values[0] < values[1] < values[2]


def test_mom_approaches_noise_variance_for_dense_neighborhoods():
    params = MomParams(k_nn=60, radius=1.5)
    for s in (0.01, 0.02):
        res = local_mom(plane_points(np.random.default_rng(5), 1500, s), params)
        assert res.value == pytest.approx(s * s, rel=0.2)


def test_mom_increases_under_misalignment():
    wins = 0
    for seed in range(40):
        r = np.random.default_rng(seed)
        a = plane_points(r, 300, 0.01)
        b = plane_points(r, 300, 0.01)
        phi = r.uniform(0, 2 * np.pi)
        shift = np.array([0.2 * np.cos(phi), 0.2 * np.sin(phi), 0.0])
        aligned = local_mom(np.concatenate([a, b])).value
        moved = local_mom(np.concatenate([a, se2.transform_points(shift, b)])).value
        wins += moved > aligned
    assert wins >= 38


def test_mom_flags_inapplicable_submaps(rng, caplog):
    floor_only = rng.uniform(0, 4, (500, 3))
    floor_only[:, 2] = 0.0
    rep = mom([plane_points(rng), floor_only], [[0], [1]])
    assert rep.inapplicable == [1]
    assert rep.total == pytest.approx(rep.per_submap[0])
    assert "not applicable" in caplog.text


def test_mom_empty_map():
    with pytest.raises(DataError):
        mom([np.zeros((0, 3))], [[0]])


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31), st.floats(0.0, 0.05))
def test_mom_nonnegative(seed, sigma):
    res = local_mom(plane_points(np.random.default_rng(seed), 300, sigma))
    assert not res.applicable or (res.value >= 0 and all(v >= 0 for v in res.per_axis))
