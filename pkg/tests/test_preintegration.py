import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fgsync import se2
from fgsync.errors import DataError
from fgsync.preintegration import preintegrate

from conftest import IMU_COV, gps, imu


def fine_step(rates, t_a, t_b, dt=1e-5):
    """Oracle: midpoint integration of piecewise-constant body rates."""
    times = [t for t, _, _ in rates]
    x = y = th = 0.0
    n = int(round((t_b - t_a) / dt))
    for k in range(n):
        t = t_a + (k + 0.5) * dt
        i = max(0, int(np.searchsorted(times, t, side="right")) - 1)
        _, v, w = rates[i]
        thm = th + 0.5 * w * dt
        x += (v[0] * np.cos(thm) - v[1] * np.sin(thm)) * dt
        y += (v[0] * np.sin(thm) + v[1] * np.cos(thm)) * dt
        th += w * dt
    return np.array([x, y, th])


def test_straight_line():
    p = preintegrate([imu(0.0, (1.0, 0.0), 0.0)], 0.0, 1.0)
    assert np.allclose(p.relative_pose, [1.0, 0.0, 0.0])


def test_pure_rotation():
    p = preintegrate([imu(0.0, (0.0, 0.0), np.pi / 2)], 0.0, 1.0)
    assert np.allclose(p.relative_pose, [0.0, 0.0, np.pi / 2])


def test_two_sample_quarter_arc():
    rates = [(0.0, (1.0, 0.0), np.pi / 2), (0.5, (1.0, 0.0), np.pi / 2)]
    p = preintegrate([imu(t, v, w) for t, v, w in rates], 0.0, 1.0)
    oracle = fine_step(rates, 0.0, 1.0)
    frozen = np.array([2 / np.pi, 2 / np.pi, np.pi / 2])
    assert np.allclose(oracle, frozen, atol=1e-8)
    assert np.allclose(p.relative_pose, frozen, atol=1e-12)


@settings(max_examples=25, deadline=None)
@given(
    st.lists(
        st.tuples(st.floats(-2, 2), st.floats(-0.5, 0.5), st.floats(-1.5, 1.5)),
        min_size=1,
        max_size=5,
    )
)
def test_matches_fine_step_oracle(samples):
    rates = [(0.1 * k, (vx, vy), w) for k, (vx, vy, w) in enumerate(samples)]
    t_b = 0.1 * len(samples)
    p = preintegrate([imu(t, v, w) for t, v, w in rates], 0.0, t_b)
    assert np.allclose(p.relative_pose, fine_step(rates, 0.0, t_b, dt=1e-4), atol=1e-6)


def test_first_sample_shift():
    p = preintegrate([imu(2.05, (1.0, 0.0)), imu(2.1, (1.0, 0.0))], 2.0, 2.2)
    assert p.first_sample_shift == pytest.approx(0.05)
    # the first sample also covers the lead-in from t_a
    assert np.allclose(p.relative_pose, [0.2, 0.0, 0.0])


def test_covariance_grows_with_samples():
    traces = []
    for n in range(1, 8):
        samples = [imu(0.02 * k, (1.0, 0.0), 0.3) for k in range(n)]
        p = preintegrate(samples, 0.0, 0.02 * n)
        assert np.all(np.linalg.eigvalsh(p.covariance) > 0)
        traces.append(np.trace(p.covariance))
    assert all(b > a for a, b in zip(traces, traces[1:]))


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 9), st.integers(1, 8), st.floats(-1, 1), st.floats(0, 2))
def test_split_composes(n, k, w, v):
    k = min(k, n - 1)
    dt = 0.02
    samples = [imu(dt * i, (v, 0.1), w) for i in range(n)]
    t_mid = dt * k
    whole = preintegrate(samples, 0.0, dt * n)
    left = preintegrate(samples[:k], 0.0, t_mid)
    right = preintegrate(samples[k:], t_mid, dt * n)
    joined = se2.compose(left.relative_pose, right.relative_pose)
    assert np.allclose(joined, whole.relative_pose, atol=1e-12)
    ad = se2.adjoint(se2.inverse(right.relative_pose))
    cov = ad @ left.covariance @ ad.T + right.covariance
    assert np.allclose(cov, whole.covariance, rtol=1e-9, atol=1e-15)


def test_errors():
    with pytest.raises(DataError):
        preintegrate([], 0.0, 1.0)
    with pytest.raises(DataError):
        preintegrate([imu(2.0)], 0.0, 1.0)
    with pytest.raises(DataError):
        preintegrate([gps(0.5)], 0.0, 1.0)
    with pytest.raises(DataError):
        preintegrate([imu(0.0, cov=IMU_COV)], 1.0, 1.0)
