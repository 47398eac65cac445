"""Synthetic desk-scale world and asynchronous sensor streams."""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import reduce
from typing import Sequence

import numpy as np

from . import se2
from .core import (
    NS,
    BodyRatePayload,
    Measurement,
    MeasurementSequence,
    PositionPayload,
    ScanPayload,
    SensorKind,
    SensorSpec,
    to_ns,
)
from .metrics import Trajectory

log = logging.getLogger(__name__)

TRUTH_STEP_NS = 1_000_000  # 1 ms


@dataclass(frozen=True)
class Surface:
    """Finite rectangle: ``center + a*u + b*v`` with ``|a| <= half_u``, ``|b| <= half_v``."""

    center: tuple
    normal: tuple
    u: tuple
    v: tuple
    half_u: float
    half_v: float


@dataclass(frozen=True)
class WorldModel:
    surfaces: tuple

    @classmethod
    def room(cls, length: float = 20.0, width: float = 6.0, height: float = 3.0) -> "WorldModel":
        L, W, H = length / 2, width / 2, height / 2
        return cls(
            (
                Surface((0, 0, 0), (0, 0, 1), (1, 0, 0), (0, 1, 0), L, W),
                Surface((L, 0, H), (-1, 0, 0), (0, 1, 0), (0, 0, 1), W, H),
                Surface((-L, 0, H), (1, 0, 0), (0, 1, 0), (0, 0, 1), W, H),
                Surface((0, W, H), (0, -1, 0), (1, 0, 0), (0, 0, 1), L, H),
                Surface((0, -W, H), (0, 1, 0), (1, 0, 0), (0, 0, 1), L, H),
            )
        )

    def orthogonal_directions(self) -> int:
        """Number of distinct mutually orthogonal normal axes."""
        axes: list = []
        for s in self.surfaces:
            n = np.asarray(s.normal, float)
            n = n / np.linalg.norm(n)
            if all(abs(n @ a) < 0.99 for a in axes):
                axes.append(n)
        best = 0
        for i, a in enumerate(axes):
            group = [a]
            for b in axes[i + 1 :]:
                if all(abs(b @ g) < 1e-6 for g in group):
                    group.append(b)
            best = max(best, len(group))
        return best

    def raycast(self, origin: np.ndarray, dirs: np.ndarray) -> np.ndarray:
        """Distance to the nearest surface along each unit ray; inf on a miss."""
        best = np.full(dirs.shape[0], np.inf)
        for s in self.surfaces:
            n = np.asarray(s.normal, float)
            c = np.asarray(s.center, float)
            denom = dirs @ n
            with np.errstate(divide="ignore", invalid="ignore"):
                dist = ((c - origin) @ n) / denom
                rel = origin + dist[:, None] * dirs - c
                inside = (
                    (np.abs(denom) > 1e-12)
                    & (dist > 1e-9)
                    & (np.abs(rel @ np.asarray(s.u, float)) <= s.half_u)
                    & (np.abs(rel @ np.asarray(s.v, float)) <= s.half_v)
                )
            best = np.where(inside & (dist < best), dist, best)
        return best


class Regime(str, enum.Enum):
    ZERO_SPEED = "zero_speed"
    ACCELERATION = "acceleration"
    CONSTANT_SPEED = "constant_speed"
    DECELERATION = "deceleration"


# desk-scale speed envelopes (m/s) per regime
REGIME_SPEEDS = {
    Regime.ZERO_SPEED: (0.0, 0.0),
    Regime.ACCELERATION: (0.0, 2.0),
    Regime.CONSTANT_SPEED: (2.0, 2.0),
    Regime.DECELERATION: (2.2, 0.0),
}


@dataclass(frozen=True)
class Segment:
    regime: Regime
    duration: float
    v_start: float
    v_end: float


@dataclass(frozen=True)
class MotionProfile:
    """Piecewise-linear speed with curvature ``curvature * sin(2 pi t / T)``."""

    segments: tuple
    curvature: float = 0.05
    start: tuple = (-8.0, 0.0, 0.0)

    def __post_init__(self):
        segs = tuple(self.segments)
        for a, b in zip(segs, segs[1:]):
            if abs(a.v_end - b.v_start) > 1e-9:
                raise ValueError("speed must be continuous across regime boundaries")
        object.__setattr__(self, "segments", segs)

    @classmethod
    def of(cls, regime: str | Regime, duration: float, **kw) -> "MotionProfile":
        r = Regime(regime)
        v0, v1 = REGIME_SPEEDS[r]
        return cls((Segment(r, duration, v0, v1),), **kw)

    @classmethod
    def chain(cls, legs: Sequence[tuple], **kw) -> "MotionProfile":
        """Consecutive ``(regime, duration)`` legs, each starting at the previous end speed."""
        segs = []
        v = None
        for regime, duration in legs:
            r = Regime(regime)
            lo, hi = REGIME_SPEEDS[r]
            v0 = lo if v is None else v
            if r is Regime.ZERO_SPEED and v0 != 0.0:
                raise ValueError("a zero-speed leg must start at rest")
            v1 = v0 if r is Regime.CONSTANT_SPEED else hi
            segs.append(Segment(r, float(duration), v0, v1))
            v = v1
        if not segs:
            raise ValueError("no motion legs")
        return cls(tuple(segs), **kw)

    @property
    def duration(self) -> float:
        return sum(s.duration for s in self.segments)

    def speed(self, t: float) -> float:
        t0 = 0.0
        for s in self.segments:
            if t <= t0 + s.duration or s is self.segments[-1]:
                u = min(max((t - t0) / s.duration, 0.0), 1.0)
                return s.v_start + u * (s.v_end - s.v_start)
            t0 += s.duration
        return 0.0

    def yaw_rate(self, t: float) -> float:
        return self.curvature * math.sin(2 * math.pi * t / self.duration) * self.speed(t)


def integrate_truth(profile: MotionProfile) -> Trajectory:
    """Exact per-step constant-twist integration on a 1 ms grid."""
    n = int(round(profile.duration * NS)) // TRUTH_STEP_NS
    dt = TRUTH_STEP_NS / NS
    knots = np.concatenate([[0.0], np.cumsum([seg.duration for seg in profile.segments])])
    values = [profile.segments[0].v_start] + [seg.v_end for seg in profile.segments]
    tm = (np.arange(n) + 0.5) * dt
    speed = np.interp(tm, knots, values)
    dth = profile.curvature * np.sin(2 * math.pi * tm / profile.duration) * speed * dt
    start = se2.pose(*profile.start)
    heading = start[2] + np.concatenate([[0.0], np.cumsum(dth)])
    small = np.abs(dth) < 1e-5
    safe = np.where(small, 1.0, dth)
    a = np.where(small, 1.0 - dth**2 / 6.0, np.sin(safe) / safe)
    b = np.where(small, dth / 2.0 - dth**3 / 24.0, 2.0 * np.sin(safe / 2.0) ** 2 / safe)
    c, s = np.cos(heading[:-1]), np.sin(heading[:-1])
    step = speed * dt
    poses = np.empty((n + 1, 3))
    poses[:, 0] = start[0] + np.concatenate([[0.0], np.cumsum(step * (c * a - s * b))])
    poses[:, 1] = start[1] + np.concatenate([[0.0], np.cumsum(step * (s * a + c * b))])
    poses[:, 2] = math.pi - np.mod(math.pi - heading, 2 * math.pi)  # (-pi, pi]
    return Trajectory(np.arange(n + 1) * dt, poses)


def default_sensors() -> list[SensorSpec]:
    """Two 2 Hz scanners 10 ms apart, 1 Hz GPS just after a scan, 50 Hz body rates."""
    return [
        SensorSpec("lidar1", SensorKind.SCAN, 0.5, phase=0.0),
        SensorSpec("lidar2", SensorKind.SCAN, 0.5, phase=0.01),
        SensorSpec("gps", SensorKind.GPS, 1.0, phase=0.502),
        SensorSpec("imu", SensorKind.CONTINUOUS, 0.02, phase=0.007),
    ]


@dataclass(frozen=True)
class ScanGeometry:
    elevation_min_deg: float = -25.0
    elevation_max_deg: float = 15.0
    mount_height: float = 1.0


def _sample_times(spec: SensorSpec, duration_ns: int, rng: np.random.Generator) -> list[int]:
    period, phase, jitter = to_ns(spec.period), to_ns(spec.phase), to_ns(spec.jitter)
    times = []
    k = 0
    while phase + k * period < duration_ns:
        t = phase + k * period
        if jitter:
            t += int(rng.integers(-jitter, jitter + 1))
        if spec.dropout and rng.random() < spec.dropout:
            k += 1
            continue
        if 0 <= t < duration_ns:
            times.append(t)
        k += 1
    return times


def _scan_points(world, geometry, pose, spec, rng, noise_scale=1.0) -> np.ndarray:
    n = spec.points_per_scan
    az = rng.uniform(0.0, 2 * math.pi, n)
    el = np.radians(rng.uniform(geometry.elevation_min_deg, geometry.elevation_max_deg, n))
    dirs = np.stack([np.cos(el) * np.cos(az), np.cos(el) * np.sin(az), np.sin(el)], axis=1)
    origin = np.array([pose[0], pose[1], geometry.mount_height])
    ranges = world.raycast(origin, dirs)
    noise = rng.normal(0.0, spec.range_sigma, n) * noise_scale
    hit = np.isfinite(ranges)
    world_pts = origin + dirs[hit] * (ranges[hit] + noise[hit])[:, None]
    rel = world_pts[:, :2] - pose[:2]
    c, s = math.cos(pose[2]), math.sin(pose[2])
    body = np.empty_like(world_pts)
    body[:, 0] = c * rel[:, 0] + s * rel[:, 1]
    body[:, 1] = -s * rel[:, 0] + c * rel[:, 1]
    body[:, 2] = world_pts[:, 2]
    return body


def generate(
    world: WorldModel,
    profile: MotionProfile,
    sensors: Sequence[SensorSpec],
    seed: int,
    geometry: ScanGeometry = ScanGeometry(),
    continuous_gaps: Sequence[tuple] = (),
    scenario: str | None = None,
    noise_scale: float = 1.0,
) -> tuple[Trajectory, MeasurementSequence]:
    """Ground truth and a sorted measurement stream.

    ``continuous_gaps`` lists ``(t0, t1)`` windows in seconds where
    continuous samples are withheld, to build epochs with back-to-back core
    measurements. ``noise_scale`` multiplies every injected noise draw while
    the declared covariances stay as configured; 0 gives exact measurements.
    """
    ids = [s.sensor_id for s in sensors]
    if len(set(ids)) != len(ids):
        raise ValueError("sensor ids must be unique")
    if scenario in ("mom", "mom_based") and world.orthogonal_directions() < 3:
        log.warning("world has fewer than 3 orthogonal surface directions; MOM may not apply")

    truth = integrate_truth(profile)
    duration_ns = to_ns(profile.duration)
    gaps = [(to_ns(a), to_ns(b)) for a, b in continuous_gaps]
    children = np.random.SeedSequence(seed).spawn(len(sensors))
    out: list[Measurement] = []
    for spec, child in zip(sensors, children):
        rng = np.random.default_rng(child)
        times = _sample_times(spec, duration_ns, rng)
        cov = spec.covariance
        sigma = np.asarray(spec.sigma, dtype=float) * noise_scale
        prev_pose = None
        for t in times:
            pose = truth.at(t / NS)
            if spec.kind is SensorKind.SCAN:
                points = _scan_points(world, geometry, pose, spec, rng, noise_scale)
                odom = None
                if prev_pose is not None:
                    odom = se2.compose(se2.between(prev_pose, pose), np.asarray(spec.odom_bias, float))
                    odom = se2.compose(odom, se2.exp(rng.normal(0.0, sigma)))
                prev_pose = pose
                payload = ScanPayload(points, odom)
            elif spec.kind is SensorKind.GPS:
                payload = PositionPayload(pose[:2] + rng.normal(0.0, sigma))
            else:
                if any(a <= t <= b for a, b in gaps):
                    continue
                tt = t / NS
                n = rng.normal(0.0, sigma)
                payload = BodyRatePayload(
                    np.array([profile.speed(tt) + n[0], n[1]]), profile.yaw_rate(tt) + n[2]
                )
            out.append(Measurement(spec.sensor_id, t, spec.kind, payload, cov))
    return truth, MeasurementSequence.from_unsorted(out)


def _as_fraction(p: float) -> Fraction:
    if not (isinstance(p, (int, float, Fraction)) and p > 0 and math.isfinite(p)):
        raise ValueError(f"period {p!r} must be positive and finite")
    f = Fraction(round(p * 10**6), 10**6)
    if abs(float(f) - p) > 1e-12 * max(1.0, abs(p)):
        raise ValueError(f"period {p!r} is not rational on a 1e-6 s grid")
    return f


def coincidence_peak_epoch(sensors: Sequence[SensorSpec | float]) -> float:
    """Least common multiple of the sensor periods."""
    if not sensors:
        raise ValueError("no sensors")
    periods = [_as_fraction(s.period if isinstance(s, SensorSpec) else s) for s in sensors]
    num = reduce(math.lcm, (f.numerator for f in periods))
    den = reduce(math.gcd, (f.denominator for f in periods))
    return float(Fraction(num, den))
