"""Command-line entry points: simulate, run, report, enumerate.

Exit codes: 0 success, 2 configuration or usage error, 3 data error,
4 pipeline error.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
import time
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import scipy

from . import __version__, formats
from .combinatorics import (
    ORACLE_N_MAX,
    brute_force_oracle,
    count_closed_form,
    enumerate_merges,
)
from .config import RunConfig, config_dict, dump_config, load_config
from .errors import ConfigError, DataError, FgsyncError, PipelineError
from .graph import dump_graph
from .solver import CONVERGENCE
from .pipeline import Scenario, TrajectoryReport, run_trajectory, scan_points
from .simgen import generate

log = logging.getLogger("fgsync")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_PIPELINE = 0, 2, 3, 4

SCENARIO_FLAGS = {
    "base": Scenario.BASE,
    "min-time-shift": Scenario.MIN_TIME_SHIFT,
    "min-solver-error": Scenario.MIN_SOLVER_ERROR,
    "mom": Scenario.MOM,
}

# for each report row: does a larger value rank better
HIGHER_IS_BETTER = {"compression_pct"}


def versions() -> dict:
    return {"fgsync": __version__, "numpy": np.__version__, "scipy": scipy.__version__}


def _out_dir(path: str | Path) -> Path:
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise DataError(f"cannot create output directory {out}: {exc}") from exc
    return out


def _write(path: Path, text: str) -> None:
    try:
        path.write_text(text)
    except OSError as exc:
        raise DataError(f"cannot write {path}: {exc}") from exc


def _with_overrides(cfg: RunConfig, seed=None, scenario=None, workers=None) -> RunConfig:
    if seed is not None:
        cfg = dataclasses.replace(cfg, seed=seed)
    if scenario is not None:
        cfg = dataclasses.replace(cfg, scenario=SCENARIO_FLAGS[scenario])
    if workers is not None:
        if workers < 1:
            raise ConfigError("--workers must be at least 1")
        cfg = dataclasses.replace(cfg, pipeline=dataclasses.replace(cfg.pipeline, workers=workers))
    return cfg


# --------------------------------------------------------------------------- simulate


def cmd_simulate(config: Optional[str], out: str, seed: Optional[int] = None) -> dict:
    start = time.perf_counter()
    cfg = _with_overrides(load_config(config), seed=seed)
    sim = cfg.simulation
    truth, stream = generate(
        sim.world(),
        sim.profile(),
        cfg.sensors,
        cfg.seed,
        geometry=sim.geometry(),
        continuous_gaps=sim.continuous_gaps,
        scenario=cfg.scenario.value,
        noise_scale=sim.noise_scale,
    )
    out_dir = _out_dir(out)
    paths = {
        "stream": out_dir / "stream.jsonl",
        "truth": out_dir / "truth.txt",
        "config": out_dir / "config.toml",
    }
    _write(paths["stream"], formats.format_stream(stream))
    _write(paths["truth"], formats.format_truth(truth))
    _write(paths["config"], dump_config(cfg))
    manifest = {
        "command": "simulate",
        "config": config_dict(cfg, execution=False),
        "seed": cfg.seed,
        "versions": versions(),
        "outputs": {k: formats.sha256_file(p) for k, p in paths.items()},
        "wall_clock": {"seconds": time.perf_counter() - start},
    }
    formats.write_manifest(out_dir / "manifest.json", manifest)
    return manifest


# --------------------------------------------------------------------------- run


def report_meta(report: TrajectoryReport, cfg: RunConfig, stream_hash: str, digest: str) -> dict:
    return {
        "manifest": digest,
        "stream": stream_hash,
        "total_mom": report.total_mom,
        "dropped_loops": report.dropped_loops,
        "excluded_measurements": report.excluded_measurements,
        "mom_fallback_epochs": report.mom_fallback_epochs,
        "epochs": len(report.epochs),
        "config": config_dict(cfg, execution=False),
        "solver": CONVERGENCE,
    }


def cmd_run(
    stream_path: str,
    out: str,
    truth_path: Optional[str] = None,
    scenario: Optional[str] = None,
    config: Optional[str] = None,
    workers: Optional[int] = None,
) -> TrajectoryReport:
    start = time.perf_counter()
    cfg = _with_overrides(load_config(config), scenario=scenario, workers=workers)
    stream = formats.read_stream(stream_path)
    stream_hash = formats.sha256_file(stream_path)
    truth = None
    truth_hash = None
    if truth_path is not None:
        truth = formats.read_truth(truth_path)
        truth_hash = formats.sha256_file(truth_path)

    report = run_trajectory(stream, cfg.scenario, cfg.pipeline, truth=truth)

    manifest = {
        "command": "run",
        "scenario": cfg.scenario.value,
        "config": config_dict(cfg, execution=False),
        "seed": cfg.seed,
        "inputs": {"stream": stream_hash, "truth": truth_hash},
        "versions": versions(),
        "execution": {"workers": cfg.pipeline.workers},
    }
    digest = formats.manifest_hash(manifest)
    out_dir = _out_dir(out)
    paths = {
        "report": out_dir / "report.csv",
        "graph": out_dir / "graph.txt",
        "map": out_dir / "map.xyz",
    }
    _write(
        paths["report"],
        formats.format_report(cfg.scenario.value, report.table(), report_meta(report, cfg, stream_hash, digest)),
    )
    _write(paths["graph"], dump_graph(report.graph, comments=[f"manifest {digest}"]))
    points = scan_points(report.graph, sorted(report.graph.variables))
    _write(paths["map"], formats.format_xyz(points, comments=[f"manifest {digest}"]))
    manifest["outputs"] = {k: formats.sha256_file(p) for k, p in paths.items()}
    manifest["wall_clock"] = {"seconds": time.perf_counter() - start}
    formats.write_manifest(out_dir / "manifest.json", manifest)
    return report


# --------------------------------------------------------------------------- report


def _rank_marks(values: dict, row: str) -> dict:
    """best / second / worst labels per scenario for one row."""
    finite = {k: v for k, v in values.items() if v is not None and np.isfinite(v)}
    if len(finite) < 2:
        return {}
    reverse = row in HIGHER_IS_BETTER
    order = sorted(finite, key=lambda k: finite[k], reverse=reverse)
    marks = {order[0]: "best", order[-1]: "worst"}
    if len(order) > 2:
        marks[order[1]] = "second"
    return marks


def combine_reports(run_dirs: Sequence[str | Path]) -> tuple[list, dict]:
    if not run_dirs:
        raise ConfigError("report needs at least one run directory")
    reports = []
    for d in run_dirs:
        path = Path(d) / "report.csv"
        try:
            reports.append(formats.parse_report(path.read_text()))
        except OSError as exc:
            raise DataError(f"cannot read {path}: {exc}") from exc
    hashes = {r.meta.get("stream") for r in reports}
    if len(hashes) != 1:
        raise DataError("runs come from different streams; refusing to join")
    scenarios = [r.scenario for r in reports]
    table = {}
    for row in formats.REPORT_ROWS:
        values = {r.scenario: r.values.get(row) for r in reports}
        table[row] = (values, _rank_marks(values, row))
    return scenarios, table


MARK_TEXT = {"best": "**", "second": "*", "worst": "!"}


def format_combined_text(scenarios: list, table: dict) -> str:
    header = ["metric"] + scenarios
    rows = [header]
    for row, (values, marks) in table.items():
        cells = [row]
        for s in scenarios:
            cell = formats.format_value(row, values[s])
            cells.append(cell + MARK_TEXT.get(marks.get(s, ""), ""))
        rows.append(cells)
    widths = [max(len(r[i]) for r in rows) for i in range(len(header))]
    lines = ["  ".join(c.rjust(w) if i else c.ljust(w) for i, (c, w) in enumerate(zip(r, widths))) for r in rows]
    lines.append("")
    lines.append("** best   * second best   ! worst")
    return "\n".join(lines) + "\n"


def format_combined_csv(scenarios: list, table: dict) -> str:
    lines = [",".join(["metric"] + scenarios + ["best", "second", "worst"])]
    for row, (values, marks) in table.items():
        by_mark = {m: s for s, m in marks.items()}
        cells = [row] + [formats.format_value(row, values[s]) for s in scenarios]
        cells += [by_mark.get(m, "") for m in ("best", "second", "worst")]
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"


def cmd_report(run_dirs: Sequence[str], out: Optional[str] = None) -> str:
    scenarios, table = combine_reports(run_dirs)
    text = format_combined_text(scenarios, table)
    if out is not None:
        _write(Path(out), format_combined_csv(scenarios, table))
    return text


# --------------------------------------------------------------------------- enumerate


def cmd_enumerate(n: int, show_list: bool = False, n_max: Optional[int] = None) -> str:
    counts = count_closed_form(n)
    lines = [
        f"n_core                 {counts.n_core}",
        f"merge combinations     {counts.merge_count}",
        f"with connections       {counts.total_with_connections}",
    ]
    if n <= ORACLE_N_MAX:
        oracle = brute_force_oracle(n)
        agree = oracle == counts
        lines.append(f"brute-force oracle     {oracle.total_with_connections} ({'agrees' if agree else 'DISAGREES'})")
    if show_list:
        cap = max(n, n_max or n)
        for mask in enumerate_merges(n, cap):
            sizes = []
            run = 1
            for bit in mask.bits:
                if bit:
                    run += 1
                else:
                    sizes.append(run)
                    run = 1
            sizes.append(run)
            k = len(sizes)
            tilings = 1 if k == 1 else 2 ** (k - 2)
            bits = "".join("1" if b else "0" for b in mask.bits) or "-"
            lines.append(f"merge bits {bits}  clusters {sizes}  tilings {tilings}")
    return "\n".join(lines) + "\n"


# --------------------------------------------------------------------------- main


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fgsync", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="generate a measurement stream and ground truth")
    s.add_argument("--config", help="TOML run configuration")
    s.add_argument("--seed", type=int, help="override the configured seed")
    s.add_argument("--out", required=True, help="output directory")

    r = sub.add_parser("run", help="build the factor graph for a stream")
    r.add_argument("stream", help="stream file written by 'simulate'")
    r.add_argument("--truth", help="ground-truth file for RPE")
    r.add_argument("--config", help="TOML run configuration")
    r.add_argument("--scenario", choices=sorted(SCENARIO_FLAGS))
    r.add_argument("--workers", type=int)
    r.add_argument("--out", required=True, help="output directory")

    c = sub.add_parser("report", help="join per-scenario runs into one table")
    c.add_argument("runs", nargs="+", help="run directories")
    c.add_argument("--out", help="write the combined CSV here")

    e = sub.add_parser("enumerate", help="candidate counts for N core measurements")
    e.add_argument("--n", type=int, required=True)
    e.add_argument("--list", action="store_true", help="print every merge combination")
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        if args.command == "simulate":
            m = cmd_simulate(args.config, args.out, seed=args.seed)
            print(f"wrote {args.out} (stream {m['outputs']['stream'][:12]})")
        elif args.command == "run":
            rep = cmd_run(args.stream, args.out, args.truth, args.scenario, args.config, args.workers)
            for name, value in rep.table().items():
                print(f"{name:18s} {formats.format_value(name, value)}")
        elif args.command == "report":
            sys.stdout.write(cmd_report(args.runs, args.out))
        elif args.command == "enumerate":
            if args.n < 1:
                raise ConfigError("--n must be at least 1")
            sys.stdout.write(cmd_enumerate(args.n, args.list))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (PipelineError, FgsyncError) as exc:
        print(f"pipeline error: {exc}", file=sys.stderr)
        return EXIT_PIPELINE
    except OverflowError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
