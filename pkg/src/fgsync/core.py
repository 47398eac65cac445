"""Measurements, sensors and measurement clusters."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence, Union

import numpy as np

from .errors import DataError, NoCoreMeasurementsError

NS = 1_000_000_000


def to_ns(seconds: float) -> int:
    return int(round(seconds * NS))


class SensorKind(str, enum.Enum):
    SCAN = "scan"
    GPS = "gps"
    CONTINUOUS = "continuous"


class Role(str, enum.Enum):
    CORE = "core"
    CONTINUOUS = "continuous"


# per-kind default noise sigmas
DEFAULT_SIGMA = {
    SensorKind.SCAN: (0.01, 0.01, np.deg2rad(0.2)),  # odometry x, y, heading
    SensorKind.GPS: (0.05, 0.05),
    SensorKind.CONTINUOUS: (0.02, 0.02, np.deg2rad(0.1)),  # vx, vy, yaw rate
}


@dataclass(frozen=True)
class SensorSpec:
    sensor_id: str
    kind: SensorKind
    period: float
    phase: float = 0.0
    sigma: tuple = ()
    jitter: float = 0.0
    dropout: float = 0.0
    # scan sensors only
    odom_bias: tuple = (0.0, 0.0, 0.0)
    range_sigma: float = 0.01
    points_per_scan: int = 200

    def __post_init__(self):
        object.__setattr__(self, "kind", SensorKind(self.kind))
        if not self.period > 0:
            raise ValueError(f"sensor {self.sensor_id}: period must be > 0")
        if not self.sigma:
            object.__setattr__(self, "sigma", tuple(DEFAULT_SIGMA[self.kind]))
        if len(self.sigma) != len(DEFAULT_SIGMA[self.kind]):
            raise ValueError(f"sensor {self.sensor_id}: wrong sigma length")

    @property
    def role(self) -> Role:
        return Role.CONTINUOUS if self.kind is SensorKind.CONTINUOUS else Role.CORE

    @property
    def covariance(self) -> np.ndarray:
        return np.diag(np.square(self.sigma))


@dataclass(frozen=True, eq=False)
class ScanPayload:
    points: np.ndarray  # (N, 3) body frame, z measured from the floor
    odometry: Optional[np.ndarray] = None  # motion since the previous scan of this sensor


@dataclass(frozen=True, eq=False)
class PositionPayload:
    position: np.ndarray  # world (x, y)


@dataclass(frozen=True, eq=False)
class BodyRatePayload:
    velocity: np.ndarray  # body (vx, vy)
    yaw_rate: float


Payload = Union[ScanPayload, PositionPayload, BodyRatePayload]

_PAYLOAD_FOR_KIND = {
    SensorKind.SCAN: (ScanPayload, 3),
    SensorKind.GPS: (PositionPayload, 2),
    SensorKind.CONTINUOUS: (BodyRatePayload, 3),
}


def _check_spd(cov: np.ndarray) -> None:
    if not np.allclose(cov, cov.T, rtol=0, atol=1e-15 + 1e-12 * np.abs(cov).max()):
        raise DataError("noise covariance is not symmetric")
    if np.linalg.eigvalsh(cov).min() <= 0:
        raise DataError("noise covariance is not positive definite")


@dataclass(frozen=True, eq=False)
class Measurement:
    """One timestamped sensor reading. Equality is identity."""

    sensor_id: str
    t_ns: int
    kind: SensorKind
    payload: Payload
    noise_covariance: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "kind", SensorKind(self.kind))
        cls, dim = _PAYLOAD_FOR_KIND[self.kind]
        if not isinstance(self.payload, cls):
            raise DataError(f"{self.kind.value} measurement needs a {cls.__name__}")
        cov = np.asarray(self.noise_covariance, dtype=float)
        if cov.shape != (dim, dim):
            raise DataError(f"covariance must be {dim}x{dim}, got {cov.shape}")
        _check_spd(cov)
        object.__setattr__(self, "noise_covariance", cov)

    @property
    def timestamp(self) -> float:
        return self.t_ns / NS

    @property
    def role(self) -> Role:
        return Role.CONTINUOUS if self.kind is SensorKind.CONTINUOUS else Role.CORE

    @property
    def key(self) -> tuple:
        return (self.t_ns, self.sensor_id)

    def __repr__(self) -> str:
        return f"<{self.kind.value}:{self.sensor_id}@{self.timestamp:.9g}>"


def sort_measurements(items: Iterable[Measurement]) -> list[Measurement]:
    """Stable order by (timestamp, sensor id)."""
    return sorted(items, key=lambda m: m.key)


@dataclass(frozen=True)
class MeasurementSequence:
    items: tuple

    def __post_init__(self):
        items = tuple(self.items)
        for a, b in zip(items, items[1:]):
            if b.t_ns < a.t_ns:
                raise DataError("measurement sequence is not sorted by timestamp")
        object.__setattr__(self, "items", items)

    @classmethod
    def from_unsorted(cls, items: Iterable[Measurement]) -> "MeasurementSequence":
        return cls(tuple(sort_measurements(items)))

    def __len__(self) -> int:
        return len(self.items)

    def __iter__(self):
        return iter(self.items)


@dataclass(frozen=True)
class MeasurementCluster:
    """Adjacent core measurements sharing one pose."""

    members: tuple

    def __post_init__(self):
        members = tuple(self.members)
        if not members:
            raise ValueError("empty cluster")
        for a, b in zip(members, members[1:]):
            if b.t_ns < a.t_ns:
                raise ValueError("cluster members must be sorted")
        object.__setattr__(self, "members", members)

    @property
    def median(self) -> Measurement:
        # lower median for even sizes
        return self.members[(len(self.members) - 1) // 2]

    @property
    def t_ns(self) -> int:
        return self.median.t_ns

    @property
    def timestamp(self) -> float:
        return self.median.timestamp

    @property
    def time_range(self) -> float:
        return (self.members[-1].t_ns - self.members[0].t_ns) / 1e9

    def __len__(self) -> int:
        return len(self.members)


@dataclass(frozen=True)
class ClusterCombination:
    """Partition of an epoch's core measurements into adjacent clusters.

    ``combination_id`` is the merge bitmask: bit ``i`` set means core
    measurements ``i`` and ``i + 1`` share a cluster.
    """

    clusters: tuple
    combination_id: int = 0

    def __post_init__(self):
        object.__setattr__(self, "clusters", tuple(self.clusters))

    @property
    def n_core(self) -> int:
        return sum(len(c) for c in self.clusters)

    @property
    def timestamps(self) -> list[float]:
        return [c.timestamp for c in self.clusters]

    @property
    def is_strictly_ordered(self) -> bool:
        ts = [c.t_ns for c in self.clusters]
        return all(b > a for a, b in zip(ts, ts[1:]))

    @property
    def members(self) -> list[Measurement]:
        return [m for c in self.clusters for m in c.members]

    def cluster_index(self) -> dict:
        """Map ``id(measurement)`` to the index of its cluster."""
        return {id(m): i for i, c in enumerate(self.clusters) for m in c.members}

    def __len__(self) -> int:
        return len(self.clusters)


def split_measurements(seq: MeasurementSequence | Sequence[Measurement]):
    core = [m for m in seq if m.role is Role.CORE]
    if not core:
        raise NoCoreMeasurementsError()
    continuous = [m for m in seq if m.role is Role.CONTINUOUS]
    return core, continuous


def init_clusters(core: Sequence[Measurement]) -> ClusterCombination:
    if not core:
        raise NoCoreMeasurementsError()
    return ClusterCombination(tuple(MeasurementCluster((m,)) for m in core), 0)


def merge_adjacent(comb: ClusterCombination, i: int) -> ClusterCombination:
    n = len(comb.clusters)
    if not 0 <= i < n - 1:
        raise IndexError(f"merge index {i} out of range for {n} clusters")
    gap = sum(len(c) for c in comb.clusters[: i + 1]) - 1
    merged = MeasurementCluster(comb.clusters[i].members + comb.clusters[i + 1].members)
    clusters = comb.clusters[:i] + (merged,) + comb.clusters[i + 2 :]
    return ClusterCombination(clusters, comb.combination_id | (1 << gap))


def combination_from_mask(core: Sequence[Measurement], mask: int) -> ClusterCombination:
    if not core:
        raise NoCoreMeasurementsError()
    if mask < 0 or mask >> max(len(core) - 1, 0):
        raise ValueError(f"mask {mask:#b} does not fit {len(core)} measurements")
    clusters, current = [], [core[0]]
    for gap, m in enumerate(core[1:]):
        if mask >> gap & 1:
            current.append(m)
        else:
            clusters.append(MeasurementCluster(tuple(current)))
            current = [m]
    clusters.append(MeasurementCluster(tuple(current)))
    return ClusterCombination(tuple(clusters), mask)
