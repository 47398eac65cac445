"""Candidate and trajectory evaluation: time shift, RPE and the MOM map metric."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
from scipy.spatial import cKDTree

from . import se2
from .core import ClusterCombination
from .errors import DataError
from .graph import FactorGraph, FactorKind

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TimeShiftReport:
    T_time_range: float
    T_delta_imu: float

    @property
    def total(self) -> float:
        return self.T_time_range + self.T_delta_imu


def total_time_shift(candidate: FactorGraph, comb: ClusterCombination) -> TimeShiftReport:
    ranges = sum(c.time_range for c in comb.clusters)
    shifts = sum(
        abs(f.time_shift)
        for f in candidate.factors.values()
        if f.kind is FactorKind.PREINTEGRATED_MOTION
    )
    return TimeShiftReport(ranges, shifts)


# --------------------------------------------------------------------------- RPE


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Timestamped poses, sorted by time."""

    times: np.ndarray  # seconds
    poses: np.ndarray  # (N, 3)

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        poses = np.asarray(self.poses, dtype=float).reshape(-1, 3)
        if times.shape[0] != poses.shape[0]:
            raise ValueError("times and poses differ in length")
        if np.any(np.diff(times) < 0):
            raise ValueError("trajectory times must be sorted")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "poses", poses)

    def __len__(self) -> int:
        return self.times.shape[0]

    def at(self, t: float) -> np.ndarray:
        times = self.times
        if t < times[0] - 1e-9 or t > times[-1] + 1e-9:
            raise ValueError(f"time {t} outside reference span")
        i = int(np.searchsorted(times, t, side="right")) - 1
        i = min(max(i, 0), len(times) - 1)
        if i == len(times) - 1 or times[i] == t:
            return self.poses[i].copy()
        s = (t - times[i]) / (times[i + 1] - times[i])
        return se2.interpolate(self.poses[i], self.poses[i + 1], s)


@dataclass(frozen=True, eq=False)
class RpeSample:
    E: np.ndarray
    trans: float
    rot: float


def rpe_samples(est: Trajectory, ref: Trajectory) -> list[RpeSample]:
    if len(est) < 2:
        raise ValueError("relative pose error needs at least 2 poses")
    ref_at = [ref.at(t) for t in est.times]
    out = []
    for i in range(len(est) - 1):
        d_ref = se2.between(ref_at[i], ref_at[i + 1])
        d_est = se2.between(est.poses[i], est.poses[i + 1])
        E = se2.between(d_ref, d_est)
        out.append(RpeSample(E, math.hypot(E[0], E[1]), abs(se2.wrap(E[2]))))
    return out


def rpe_rmse(est: Trajectory, ref: Trajectory) -> tuple[float, float]:
    """RMSE of consecutive-pair relative pose errors: (meters, radians)."""
    samples = rpe_samples(est, ref)
    trans = math.sqrt(sum(s.trans**2 for s in samples) / len(samples))
    rot = math.sqrt(sum(s.rot**2 for s in samples) / len(samples))
    return trans, rot


# --------------------------------------------------------------------------- MOM


@dataclass(frozen=True)
class MomParams:
    k_nn: int = 10
    radius: float = 0.5
    orth_cos: float = math.cos(math.radians(80.0))
    min_group: int = 30
    min_neighbors: int = 5
    align_deg: float = 15.0
    planarity: float = 0.3
    seeds: int = 64
    purity_hops: int = 2
    label_k_nn: int = 30
    label_radius: float = 1.0


@dataclass(frozen=True)
class LocalMom:
    value: float
    per_axis: tuple  # (V_x, V_y, V_z); nan when not applicable
    applicable: bool
    n_points: int = 0


@dataclass(frozen=True)
class MomReport:
    per_submap: list
    per_axis_variance: list
    inapplicable: list = field(default_factory=list)

    @property
    def total(self) -> float:
        return float(sum(v for v in self.per_submap if not math.isnan(v)))


def _cov_eig(points: np.ndarray, idx: np.ndarray, valid: np.ndarray):
    """Eigen-decomposition of the centered covariance of each index row."""
    counts = valid.sum(axis=1)
    w = valid.astype(float)
    nb = points[idx]  # (n, k, 3)
    mean = (nb * w[..., None]).sum(axis=1) / np.maximum(counts, 1)[:, None]
    centered = (nb - mean[:, None, :]) * w[..., None]
    cov = np.einsum("nki,nkj->nij", centered, centered) / np.maximum(counts, 1)[:, None, None]
    evals, evecs = np.linalg.eigh(cov)
    return counts, np.clip(evals, 0.0, None), evecs, mean


def _query(points: np.ndarray, params: MomParams):
    n = points.shape[0]
    k = min(params.k_nn + 1, n)
    dist, idx = cKDTree(points).query(points, k=k, distance_upper_bound=params.radius)
    if k == 1:
        dist, idx = dist[:, None], idx[:, None]
    valid = np.isfinite(dist)
    return np.where(valid, idx, np.arange(n)[:, None]), valid


def _neighborhoods(points: np.ndarray, params: MomParams):
    """Centered-covariance eigen-decomposition over each point's neighbors."""
    idx, valid = _query(points, params)
    counts, evals, evecs, _ = _cov_eig(points, idx, valid)
    return counts, evals, evecs


def _direction_groups(normals: np.ndarray, params: MomParams) -> list[tuple]:
    cos_align = math.cos(math.radians(params.align_deg))
    remaining = np.arange(normals.shape[0])
    groups = []
    for _ in range(6):
        if remaining.size < params.min_group:
            break
        cand = normals[remaining]
        step = max(1, remaining.size // params.seeds)
        seeds = cand[::step]
        support = (np.abs(seeds @ cand.T) > cos_align).sum(axis=1)
        d = seeds[int(np.argmax(support))]
        for _ in range(3):
            member = np.abs(cand @ d) > cos_align
            signed = cand[member] * np.sign(cand[member] @ d)[:, None]
            d = signed.mean(axis=0)
            d /= np.linalg.norm(d)
        member = np.abs(cand @ d) > cos_align
        if member.sum() < params.min_group:
            break
        groups.append((d, remaining[member]))
        remaining = remaining[~member]
    return groups


def _pick_orthogonal_triple(groups: list, params: MomParams):
    best, best_size = None, -1
    n = len(groups)
    for a in range(n):
        for b in range(a + 1, n):
            for c in range(b + 1, n):
                trio = (groups[a], groups[b], groups[c])
                dirs = [g[0] for g in trio]
                if all(
                    abs(dirs[p] @ dirs[q]) < params.orth_cos
                    for p, q in ((0, 1), (0, 2), (1, 2))
                ):
                    size = sum(len(g[1]) for g in trio)
                    if size > best_size:
                        best, best_size = trio, size
    return best


def local_mom(points: np.ndarray, params: MomParams = MomParams()) -> LocalMom:
    """Mean over three orthogonal plane groups of the mean minimal eigenvalue."""
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    nan3 = (math.nan, math.nan, math.nan)
    if pts.shape[0] < params.k_nn + 1:
        return LocalMom(math.nan, nan3, False, pts.shape[0])

    # surfaces and their members come from wider neighborhoods, whose normals
    # stay on the surface when a misaligned map splits it into parallel sheets
    wide = replace(params, k_nn=params.label_k_nn, radius=params.label_radius)
    w_idx, w_valid = _query(pts, wide)
    counts, evals, evecs, _ = _cov_eig(pts, w_idx, w_valid)
    ok = (counts >= params.min_neighbors) & (
        evals[:, 0] <= params.planarity * np.maximum(evals[:, 1], 1e-300)
    )
    if ok.sum() < 3 * params.min_group:
        return LocalMom(math.nan, nan3, False, pts.shape[0])
    trio = _pick_orthogonal_triple(_direction_groups(evecs[ok, :, 0], params), params)
    if trio is None:
        return LocalMom(math.nan, nan3, False, pts.shape[0])
    dirs = np.array([d for d, _ in trio])
    align = np.abs(evecs[:, :, 0] @ dirs.T)
    ok &= align.max(axis=1) > math.cos(math.radians(params.align_deg))
    label = np.where(ok, np.argmax(align, axis=1), -1)

    # a point counts only when everything within purity_hops neighbor hops
    # carries its label, which keeps creases between surfaces out of every group
    nb_idx, _ = _query(pts, params)
    pure = (label >= 0) & np.all(label[nb_idx] == label[:, None], axis=1)
    for _ in range(params.purity_hops - 1):
        pure &= np.all(pure[nb_idx], axis=1)

    variances = {}
    for g, (direction, _) in enumerate(trio):
        group_pts = pts[pure & (label == g)]
        if group_pts.shape[0] < params.min_group:
            return LocalMom(math.nan, nan3, False, pts.shape[0])
        g_counts, g_evals, _ = _neighborhoods(group_pts, params)
        usable = g_counts >= params.min_neighbors
        if usable.sum() < params.min_group:
            return LocalMom(math.nan, nan3, False, pts.shape[0])
        axis = int(np.argmax(np.abs(direction)))
        while axis in variances:  # oblique scenes: keep three distinct slots
            axis = (axis + 1) % 3
        variances[axis] = float(g_evals[usable, 0].mean())
    per_axis = tuple(variances[a] for a in range(3))
    return LocalMom(sum(per_axis) / 3.0, per_axis, True, pts.shape[0])


def mom(
    map_points: Sequence[np.ndarray],
    submap_windows: Sequence[Sequence[int]],
    params: MomParams = MomParams(),
) -> MomReport:
    """MOM summed over submaps.

    ``map_points[i]`` holds the world-frame points attached to pose ``i``;
    each window lists the pose indices aggregated into one submap.
    Inapplicable submaps are reported and left out of the total.
    """
    if not map_points or all(np.asarray(p).size == 0 for p in map_points):
        raise DataError("empty map")
    per_submap, per_axis, inapplicable = [], [], []
    for w, window in enumerate(submap_windows):
        chunks = [np.asarray(map_points[i]).reshape(-1, 3) for i in window]
        pts = np.concatenate(chunks) if chunks else np.zeros((0, 3))
        res = local_mom(pts, params)
        per_submap.append(res.value)
        per_axis.append(res.per_axis)
        if not res.applicable:
            inapplicable.append(w)
            log.warning("MOM not applicable to submap %d (no orthogonal structure)", w)
    return MomReport(per_submap, per_axis, inapplicable)
