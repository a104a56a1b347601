"""Command-line driver, snapshot/probe writers, run manifest, and SVG plots.

Snapshots are CSV (canonical, diff-able) with an optional legacy-VTK point
export. Plots are self-contained SVG line charts written without any plotting
runtime. Output files are byte-stable for identical runs; only the manifest
carries a timestamp.
"""
from __future__ import annotations

import argparse
import json
import os
import queue
import sys
import threading
from dataclasses import replace

import numpy as np

from . import __version__
from .integrator import SimulationError
from .particles import Phase
from .scenarios import (SCENARIOS, ConfigError, ScenarioConfig,
                        build_scenario, build_simulation, ritter_front,
                        solid_damage_field)

__all__ = ["run", "main", "write_snapshot", "read_snapshot_csv", "emit_plots",
           "SnapshotWriter"]

SNAPSHOT_HEADER = ("id [-],phase [-],x [m],y [m],vx [m/s],vy [m/s],"
                   "rho [kg/m3],m [kg],p [Pa],sxx [Pa],syy [Pa],sxy [Pa],D [-]")


def _fmt(v: float) -> str:
    return repr(float(v))


def _snapshot_lines(pts, D) -> list[str]:
    lines = [SNAPSHOT_HEADER]
    for i in range(pts.n):
        lines.append(",".join([
            str(i), str(int(pts.phase[i])),
            _fmt(pts.x[i, 0]), _fmt(pts.x[i, 1]),
            _fmt(pts.v[i, 0]), _fmt(pts.v[i, 1]),
            _fmt(pts.rho[i]), _fmt(pts.m[i]), _fmt(pts.p[i]),
            _fmt(pts.sxx[i]), _fmt(pts.syy[i]), _fmt(pts.sxy[i]),
            _fmt(D[i]),
        ]))
    return lines


def _vtk_lines(pts, D, t: float) -> list[str]:
    n = pts.n
    lines = [
        "# vtk DataFile Version 3.0",
        f"particle snapshot t={_fmt(t)} s",
        "ASCII",
        "DATASET POLYDATA",
        f"POINTS {n} double",
    ]
    for i in range(n):
        lines.append(f"{_fmt(pts.x[i, 0])} {_fmt(pts.x[i, 1])} 0.0")
    lines.append(f"VERTICES {n} {2 * n}")
    for i in range(n):
        lines.append(f"1 {i}")
    lines.append(f"POINT_DATA {n}")
    lines.append("SCALARS phase int 1")
    lines.append("LOOKUP_TABLE default")
    for i in range(n):
        lines.append(str(int(pts.phase[i])))
    for name, arr in (("pressure", pts.p), ("density", pts.rho), ("damage", D)):
        lines.append(f"SCALARS {name} double 1")
        lines.append("LOOKUP_TABLE default")
        for i in range(n):
            lines.append(_fmt(arr[i]))
    lines.append("VECTORS velocity double")
    for i in range(n):
        lines.append(f"{_fmt(pts.v[i, 0])} {_fmt(pts.v[i, 1])} 0.0")
    return lines


def _write_text(path: str, lines: list[str]) -> None:
    """Write atomically enough for tests: drop the partial file on failure."""
    try:
        with open(path, "w") as fh:
            fh.write("\n".join(lines))
            fh.write("\n")
    except OSError:
        if os.path.exists(path):
            os.remove(path)
        raise


def write_snapshot(path: str, pts, D, t: float = 0.0, fmt: str = "csv") -> str:
    """Write one particle snapshot; fmt is 'csv' or 'vtk'."""
    if fmt == "csv":
        _write_text(path, _snapshot_lines(pts, D))
    elif fmt == "vtk":
        _write_text(path, _vtk_lines(pts, D, t))
    else:
        raise ValueError(f"unknown snapshot format {fmt!r}")
    return path


def read_snapshot_csv(path: str) -> dict[str, np.ndarray]:
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        rows = [line.strip().split(",") for line in fh if line.strip()]
    cols = {name.split(" ")[0]: k for k, name in enumerate(header)}
    data = np.array(rows, dtype=np.float64) if rows else np.zeros((0, len(header)))
    return {name: data[:, k] for name, k in cols.items()}


class SnapshotWriter:
    """Background writer with a bounded queue; a full queue blocks the producer."""

    def __init__(self, maxsize: int = 8):
        self._q: queue.Queue = queue.Queue(maxsize=maxsize)
        self._exc: BaseException | None = None
        self._thread = threading.Thread(target=self._loop, daemon=True)
        self._thread.start()

    def _loop(self) -> None:
        while True:
            job = self._q.get()
            if job is None:
                return
            path, lines = job
            try:
                _write_text(path, lines)
            except BaseException as exc:  # surfaced on close()
                self._exc = exc
                return

    def submit(self, path: str, lines: list[str]) -> None:
        if self._exc is not None:
            raise self._exc
        self._q.put((path, lines))

    def close(self) -> None:
        self._q.put(None)
        self._thread.join()
        if self._exc is not None:
            raise self._exc


# ---------------------------------------------------------------------------
# SVG plots
# ---------------------------------------------------------------------------

_PLOT_W, _PLOT_H = 720, 480
_MARGIN = 64.0
_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd")


def _ticks(lo: float, hi: float, n: int = 5) -> list[float]:
    if hi <= lo:
        hi = lo + 1.0
    return [lo + (hi - lo) * k / (n - 1) for k in range(n)]


def svg_line_chart(path: str, series: list[tuple[str, np.ndarray, np.ndarray]],
                   xlabel: str, ylabel: str, title: str) -> str:
    """Minimal line chart: axes, ticks, one polyline per series, text legend."""
    xs = np.concatenate([s[1] for s in series])
    ys = np.concatenate([s[2] for s in series])
    x_lo, x_hi = float(xs.min()), float(xs.max())
    y_lo, y_hi = float(ys.min()), float(ys.max())
    if x_hi - x_lo <= 0:
        x_hi = x_lo + 1.0
    if y_hi - y_lo <= 0:
        y_hi, y_lo = y_lo + 1.0, y_lo - 1.0
    pad = 0.05 * (y_hi - y_lo)
    y_lo -= pad
    y_hi += pad
    iw = _PLOT_W - 2 * _MARGIN
    ih = _PLOT_H - 2 * _MARGIN

    def px(x):
        return _MARGIN + (x - x_lo) / (x_hi - x_lo) * iw

    def py(y):
        return _PLOT_H - _MARGIN - (y - y_lo) / (y_hi - y_lo) * ih

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_PLOT_W}" '
        f'height="{_PLOT_H}" viewBox="0 0 {_PLOT_W} {_PLOT_H}">',
        f'<rect width="{_PLOT_W}" height="{_PLOT_H}" fill="white"/>',
        f'<text x="{_PLOT_W / 2:.1f}" y="24" text-anchor="middle" '
        f'font-family="sans-serif" font-size="15">{title}</text>',
    ]
    for xt in _ticks(x_lo, x_hi):
        out.append(f'<line x1="{px(xt):.2f}" y1="{py(y_lo):.2f}" x2="{px(xt):.2f}" '
                   f'y2="{py(y_lo) + 5:.2f}" stroke="black"/>')
        out.append(f'<text x="{px(xt):.2f}" y="{py(y_lo) + 20:.2f}" '
                   f'text-anchor="middle" font-family="sans-serif" '
                   f'font-size="11">{xt:.4g}</text>')
    for yt in _ticks(y_lo, y_hi):
        out.append(f'<line x1="{px(x_lo) - 5:.2f}" y1="{py(yt):.2f}" '
                   f'x2="{px(x_lo):.2f}" y2="{py(yt):.2f}" stroke="black"/>')
        out.append(f'<text x="{px(x_lo) - 8:.2f}" y="{py(yt) + 4:.2f}" '
                   f'text-anchor="end" font-family="sans-serif" '
                   f'font-size="11">{yt:.4g}</text>')
    out.append(f'<rect x="{_MARGIN}" y="{_MARGIN}" width="{iw}" height="{ih}" '
               f'fill="none" stroke="black"/>')
    out.append(f'<text x="{_PLOT_W / 2:.1f}" y="{_PLOT_H - 16}" '
               f'text-anchor="middle" font-family="sans-serif" '
               f'font-size="13">{xlabel}</text>')
    out.append(f'<text x="18" y="{_PLOT_H / 2:.1f}" text-anchor="middle" '
               f'font-family="sans-serif" font-size="13" '
               f'transform="rotate(-90 18 {_PLOT_H / 2:.1f})">{ylabel}</text>')
    for k, (label, x, y) in enumerate(series):
        color = _COLORS[k % len(_COLORS)]
        stride = max(1, x.size // 1500)
        pts_txt = " ".join(f"{px(float(xv)):.2f},{py(float(yv)):.2f}"
                           for xv, yv in zip(x[::stride], y[::stride]))
        dash = ' stroke-dasharray="6,4"' if k > 0 else ""
        out.append(f'<polyline fill="none" stroke="{color}" '
                   f'stroke-width="1.5"{dash} points="{pts_txt}"/>')
        out.append(f'<text x="{_PLOT_W - _MARGIN - 6:.1f}" '
                   f'y="{_MARGIN + 18 + 16 * k:.1f}" text-anchor="end" '
                   f'font-family="sans-serif" font-size="12" '
                   f'fill="{color}">{label}</text>')
    out.append("</svg>")
    _write_text(path, out)
    return path


def emit_plots(t: np.ndarray, data: dict[str, np.ndarray],
               config: ScenarioConfig, out_dir: str) -> list[str]:
    """One SVG per probe column, with analytic overlays where the scenario
    defines them (dam-break front against the closed-form solution)."""
    if t.size == 0:
        return []
    os.makedirs(out_dir, exist_ok=True)
    paths = []
    tau = t / config.time_scale if config.time_scale else t
    xlabel = "tau = t / sqrt(H/g) [-]" if config.time_scale else "t [s]"
    for spec in config.probes:
        if spec.name not in data:
            continue
        y = data[spec.name]
        series = [(spec.name, tau, y)]
        if spec.kind == "front_position" and config.front_ref == "ritter":
            series.append(("analytic front 1+2tau", tau, ritter_front(tau)))
        path = os.path.join(out_dir, f"{spec.name}.svg")
        svg_line_chart(path, series, xlabel, f"{spec.name} [{spec.unit}]",
                       f"{config.name}: {spec.name}")
        paths.append(path)
    return paths


# ---------------------------------------------------------------------------
# Run driver
# ---------------------------------------------------------------------------

def run(config: ScenarioConfig, out_dir: str, snapshot_format: str = "csv",
        plots: bool = True) -> dict:
    """Simulate a config to end_time, writing snapshots, probes, manifest, plots.

    Returns the manifest dict. Raises ConfigError / SimulationError on failure.
    """
    import time as _time

    start_wall = _time.time()
    sim, probes = build_simulation(config)
    snap_dir = os.path.join(out_dir, "snapshots")
    os.makedirs(snap_dir, exist_ok=True)

    formats = ("csv", "vtk") if snapshot_format == "both" else (snapshot_format,)
    writer = SnapshotWriter()
    snap_count = 0

    def emit_snapshot():
        nonlocal snap_count
        D = solid_damage_field(sim)
        pts = sim.pts
        t = sim.control.t
        for fmt in formats:
            ext = "csv" if fmt == "csv" else "vtk"
            path = os.path.join(snap_dir, f"snap_{snap_count:06d}.{ext}")
            lines = _snapshot_lines(pts, D) if fmt == "csv" else _vtk_lines(pts, D, t)
            writer.submit(path, lines)
        snap_count += 1

    times: list[float] = []
    rows: list[list[float]] = []
    try:
        emit_snapshot()
        next_out = config.output_every
        end = config.end_time
        while sim.control.t < end - 1e-12:
            dt = min(sim.next_dt(), end - sim.control.t)
            sim.step(dt)
            times.append(sim.control.t)
            rows.append(probes.sample(sim))
            if sim.control.t >= next_out - 1e-12:
                emit_snapshot()
                next_out += config.output_every
    finally:
        writer.close()

    probe_path = os.path.join(out_dir, "probes.csv")
    header = ",".join(["t [s]"] + probes.columns())
    lines = [header]
    for t, row in zip(times, rows):
        lines.append(",".join([_fmt(t)] + [_fmt(v) for v in row]))
    _write_text(probe_path, lines)

    t_arr = np.array(times)
    data = {spec.name: np.array([r[k] for r in rows])
            for k, spec in enumerate(probes.specs)}
    if plots:
        emit_plots(t_arr, data, config, os.path.join(out_dir, "plots"))

    pts = sim.pts
    manifest = {
        "version": f"fsisph-{__version__}",
        "scenario": config.to_dict(),
        "counts": {
            "particles": pts.n,
            "fluid": int(np.count_nonzero(pts.phase == int(Phase.FLUID))),
            "solid": int(np.count_nonzero(pts.phase == int(Phase.SOLID))),
            "wall": int(np.count_nonzero(pts.phase == int(Phase.WALL))),
            "bonds": sim.bonds.n_bonds,
            "snapshots": snap_count,
        },
        "stats": sim.stats,
        "wall_clock_s": _time.time() - start_wall,
    }
    with open(os.path.join(out_dir, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2, default=float)
        fh.write("\n")
    return manifest


# ---------------------------------------------------------------------------
# CLI
# ---------------------------------------------------------------------------

def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fsisph",
        description="2D weakly compressible SPH with fluid-structure "
                    "interaction and pseudo-spring fracture")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="simulate a scenario")
    p_run.add_argument("scenario", nargs="?", help="built-in scenario name")
    p_run.add_argument("--config", help="JSON config file (alternative to name)")
    p_run.add_argument("--out", required=True, help="output directory")
    p_run.add_argument("--dp", type=float, help="particle spacing override")
    p_run.add_argument("--end-time", type=float, help="end time override [s]")
    p_run.add_argument("--format", choices=("csv", "vtk", "both"), default="csv")
    p_run.add_argument("--no-plots", action="store_true")
    p_run.add_argument("--seed", type=int, default=0,
                       help="reserved; the pipeline is deterministic and seed-free")

    p_print = sub.add_parser("print-config", help="print a built-in config as JSON")
    p_print.add_argument("scenario")
    p_print.add_argument("--dp", type=float)

    sub.add_parser("list-scenarios", help="list built-in scenarios")
    return parser


def _load_config(args) -> ScenarioConfig:
    if args.config:
        with open(args.config) as fh:
            config = ScenarioConfig.from_dict(json.load(fh))
        if args.dp is not None:
            config = replace(config, dp=args.dp)
    elif args.scenario:
        config = build_scenario(args.scenario, dp=args.dp)
    else:
        raise ConfigError("run needs a scenario name or --config FILE")
    if args.end_time is not None:
        config = replace(config, end_time=args.end_time)
    return config


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "list-scenarios":
            for name in sorted(SCENARIOS):
                doc = (SCENARIOS[name].__doc__ or "").strip().splitlines()[0]
                print(f"{name:12s} {doc}")
            return 0
        if args.command == "print-config":
            config = build_scenario(args.scenario, dp=args.dp)
            print(json.dumps(config.to_dict(), indent=2))
            return 0
        # run
        config = _load_config(args)
        manifest = run(config, args.out, snapshot_format=args.format,
                       plots=not args.no_plots)
        stats = manifest["stats"]
        print(f"{config.name}: {stats['steps']} steps to t={config.end_time} s, "
              f"{manifest['counts']['particles']} particles, "
              f"{manifest['counts']['snapshots']} snapshots -> {args.out}")
        return 0
    except (ConfigError, SimulationError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
