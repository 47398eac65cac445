"""Versioned text formats: measurement streams, ground truth, point clouds, reports.

Floats are written with ``repr`` so every file round-trips exactly and two
runs with the same inputs produce the same bytes.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional

import numpy as np

from .core import (
    BodyRatePayload,
    Measurement,
    MeasurementSequence,
    PositionPayload,
    ScanPayload,
    SensorKind,
)
from .errors import DataError
from .metrics import Trajectory

STREAM_HEADER = "# fgsync-stream v1"
TRUTH_HEADER = "# fgsync-truth v1"
REPORT_HEADER = "# fgsync-report v1"
XYZ_HEADER = "# fgsync-xyz v1"


def sha256_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def sha256_file(path: str | Path) -> str:
    return sha256_bytes(Path(path).read_bytes())


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


# --------------------------------------------------------------------------- stream


def _floats(a) -> list:
    return [float(v) for v in np.asarray(a, dtype=float).ravel()]


def measurement_record(m: Measurement) -> dict:
    p = m.payload
    if m.kind is SensorKind.SCAN:
        payload = {
            "points": np.asarray(p.points, dtype=float).reshape(-1, 3).tolist(),
            "odometry": None if p.odometry is None else _floats(p.odometry),
        }
    elif m.kind is SensorKind.GPS:
        payload = {"position": _floats(p.position)}
    else:
        payload = {"velocity": _floats(p.velocity), "yaw_rate": float(p.yaw_rate)}
    return {
        "t_ns": int(m.t_ns),
        "sensor_id": m.sensor_id,
        "kind": m.kind.value,
        "payload": payload,
        "cov": np.asarray(m.noise_covariance, dtype=float).tolist(),
    }


def measurement_from_record(rec: dict) -> Measurement:
    kind = SensorKind(rec["kind"])
    p = rec["payload"]
    if kind is SensorKind.SCAN:
        odom = p.get("odometry")
        payload = ScanPayload(
            np.asarray(p["points"], dtype=float).reshape(-1, 3),
            None if odom is None else np.asarray(odom, dtype=float),
        )
    elif kind is SensorKind.GPS:
        payload = PositionPayload(np.asarray(p["position"], dtype=float))
    else:
        payload = BodyRatePayload(np.asarray(p["velocity"], dtype=float), float(p["yaw_rate"]))
    t_ns = rec["t_ns"]
    if not isinstance(t_ns, int) or isinstance(t_ns, bool):
        raise DataError("t_ns must be an integer")
    return Measurement(str(rec["sensor_id"]), t_ns, kind, payload, np.asarray(rec["cov"], dtype=float))


def format_stream(seq: Iterable[Measurement]) -> str:
    lines = [STREAM_HEADER]
    lines += [json.dumps(measurement_record(m), separators=(",", ":")) for m in seq]
    return "\n".join(lines) + "\n"


def parse_stream(text: str) -> MeasurementSequence:
    lines = text.splitlines()
    if not lines or lines[0].strip() != STREAM_HEADER:
        raise DataError(f"line 1: expected header {STREAM_HEADER!r}")
    items = []
    for no, line in enumerate(lines[1:], start=2):
        if not line.strip() or line.startswith("#"):
            continue
        try:
            items.append(measurement_from_record(json.loads(line)))
        except (ValueError, KeyError, TypeError) as exc:
            raise DataError(f"line {no}: malformed measurement ({exc})") from exc
    try:
        return MeasurementSequence(items)
    except ValueError as exc:
        raise DataError(f"stream: {exc}") from exc


def write_stream(path: str | Path, seq: Iterable[Measurement]) -> None:
    Path(path).write_text(format_stream(seq))


def read_stream(path: str | Path) -> MeasurementSequence:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise DataError(f"cannot read stream {path}: {exc}") from exc
    return parse_stream(text)


# --------------------------------------------------------------------------- truth


def format_truth(traj: Trajectory) -> str:
    lines = [TRUTH_HEADER]
    for t, (x, y, th) in zip(traj.times, traj.poses):
        lines.append(f"{int(round(t * 1e9))} {float(x)!r} {float(y)!r} {float(th)!r}")
    return "\n".join(lines) + "\n"


def parse_truth(text: str) -> Trajectory:
    lines = text.splitlines()
    if not lines or lines[0].strip() != TRUTH_HEADER:
        raise DataError(f"line 1: expected header {TRUTH_HEADER!r}")
    times, poses = [], []
    for no, line in enumerate(lines[1:], start=2):
        if not line.strip() or line.startswith("#"):
            continue
        parts = line.split()
        try:
            if len(parts) != 4:
                raise ValueError(f"expected 4 fields, got {len(parts)}")
            times.append(int(parts[0]) / 1e9)
            poses.append([float(v) for v in parts[1:]])
        except ValueError as exc:
            raise DataError(f"line {no}: malformed pose ({exc})") from exc
    if not times:
        raise DataError("truth file holds no poses")
    try:
        return Trajectory(np.array(times), np.array(poses))
    except ValueError as exc:
        raise DataError(f"truth: {exc}") from exc


def read_truth(path: str | Path) -> Trajectory:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise DataError(f"cannot read truth {path}: {exc}") from exc
    return parse_truth(text)


# --------------------------------------------------------------------------- XYZ


def format_xyz(points: np.ndarray, comments: Iterable[str] = ()) -> str:
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    lines = [XYZ_HEADER] + [f"# {c}" for c in comments]
    lines += [f"{x:.6f} {y:.6f} {z:.6f}" for x, y, z in pts]
    return "\n".join(lines) + "\n"


def parse_xyz(text: str) -> np.ndarray:
    rows = []
    for no, line in enumerate(text.splitlines(), start=1):
        if not line.strip() or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 3:
            raise DataError(f"line {no}: expected 'x y z'")
        try:
            rows.append([float(v) for v in parts])
        except ValueError as exc:
            raise DataError(f"line {no}: {exc}") from exc
    return np.array(rows, dtype=float).reshape(-1, 3)


# --------------------------------------------------------------------------- reports

REPORT_ROWS = (
    "total_time_shift",
    "solver_error",
    "rpe_m",
    "rpe_deg",
    "clusters",
    "vertices",
    "factors",
    "compression_pct",
)


def format_value(name: str, value) -> str:
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return "nan"
    if name in ("clusters", "vertices", "factors"):
        return str(int(value))
    if name == "compression_pct":
        return f"{value:.2f}"
    return f"{value:.6f}"


@dataclass
class Report:
    scenario: str
    values: dict
    meta: dict = field(default_factory=dict)


def format_report(scenario: str, values: dict, meta: dict) -> str:
    """CSV with ``metric,value`` rows; ``meta`` goes into ``# key value`` comments."""
    lines = [REPORT_HEADER, f"# scenario {scenario}"]
    for key in sorted(meta):
        v = meta[key]
        lines.append(f"# {key} {v if isinstance(v, str) else canonical_json(v)}")
    lines.append("metric,value")
    lines += [f"{name},{format_value(name, values.get(name))}" for name in REPORT_ROWS]
    return "\n".join(lines) + "\n"


def parse_report(text: str) -> Report:
    lines = text.splitlines()
    if not lines or lines[0].strip() != REPORT_HEADER:
        raise DataError(f"line 1: expected header {REPORT_HEADER!r}")
    scenario = None
    meta: dict = {}
    values: dict = {}
    for no, line in enumerate(lines[1:], start=2):
        if line.startswith("#"):
            key, _, rest = line[1:].strip().partition(" ")
            if key == "scenario":
                scenario = rest
            else:
                try:
                    meta[key] = json.loads(rest)
                except ValueError:
                    meta[key] = rest
            continue
        if not line.strip() or line == "metric,value":
            continue
        name, _, value = line.partition(",")
        if name not in REPORT_ROWS:
            raise DataError(f"line {no}: unknown metric {name!r}")
        values[name] = float(value)
    if scenario is None:
        raise DataError("report has no scenario line")
    return Report(scenario, values, meta)


# --------------------------------------------------------------------------- manifest


def manifest_hash(manifest: dict) -> str:
    """Hash of everything that determines the outputs.

    Wall-clock, execution settings and the output digests themselves are left
    out, so artifacts can quote the hash before they are written.
    """
    stable = {k: v for k, v in manifest.items() if k not in ("wall_clock", "execution", "outputs")}
    return sha256_bytes(canonical_json(stable).encode())


def write_manifest(path: str | Path, manifest: dict) -> str:
    digest = manifest_hash(manifest)
    body = dict(manifest, manifest_hash=digest)
    Path(path).write_text(json.dumps(body, indent=2, sort_keys=True) + "\n")
    return digest


def read_manifest(path: str | Path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except (OSError, ValueError) as exc:
        raise DataError(f"cannot read manifest {path}: {exc}") from exc
