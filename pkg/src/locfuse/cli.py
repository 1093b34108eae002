"""Command-line front end: config parsing, dispatch, output emission.

Commands write their CSV/JSON outputs plus a manifest.json capturing the
fully resolved config and seed; re-running a command from its manifest
reproduces the delimited outputs byte for byte. Figures (PNG) are rendered
alongside unless --no-figures is given.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import math
import os
import sys

import numpy as np

from . import report, signal as sig
from .experiment import (ConfigError, ExperimentConfig, compare_geometries,
                         config_from_dict, config_to_dict, error_stats,
                         monte_carlo_runs, pooled_samples, summarize_runs,
                         sweep, ERROR_CLASSES, NODE_CLASSES)
from .fusion import InitializationError, StateError
from .measurement import calibrate_sigma
from .scene import SPEED_OF_LIGHT, PlacementError
from .signal import EstimationError

_HANDLED_ERRORS = (ConfigError, PlacementError, InitializationError,
                   StateError, EstimationError, ValueError, OSError)


def _fmt(v) -> str:
    if isinstance(v, float):
        return f"{v:.12g}"
    return str(v)


def write_csv(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def write_json(path, doc) -> None:
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def parse_config(path) -> ExperimentConfig:
    """Load an experiment config (or a manifest produced by a previous run)."""
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: malformed JSON at line {exc.lineno}: {exc.msg}") from None
    if isinstance(doc, dict) and "command" in doc and "config" in doc:
        doc = doc["config"]
    return config_from_dict(doc)


class _OutputSet:
    """Tracks files written by one command; a failure removes any partials."""

    def __init__(self, out_dir):
        self.out_dir = out_dir
        self.names = []
        os.makedirs(out_dir, exist_ok=True)

    def path(self, name: str) -> str:
        self.names.append(name)
        return os.path.join(self.out_dir, name)

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc_type is not None:
            for name in self.names:
                p = os.path.join(self.out_dir, name)
                if os.path.exists(p):
                    os.remove(p)
        return False


def _apply_overrides(cfg: ExperimentConfig, args) -> ExperimentConfig:
    changes = {}
    if getattr(args, "seed", None) is not None:
        changes["seed"] = args.seed
    if getattr(args, "mode", None):
        changes["mode"] = args.mode
    if getattr(args, "measurements", None):
        changes["measurement_set"] = args.measurements
    if getattr(args, "runs", None):
        changes["monte_carlo_runs"] = args.runs
    return dataclasses.replace(cfg, **changes) if changes else cfg


def _write_manifest(out: _OutputSet, command: str, cfg: ExperimentConfig) -> None:
    doc = {
        "command": command,
        "seed": cfg.seed,
        "config": config_to_dict(cfg),
        "outputs": sorted(out.names),
    }
    write_json(out.path("manifest.json"), doc)


def _cdf_rows(results):
    pools = {(nc, ec): pooled_samples(results, ec, nc)
             for nc in NODE_CLASSES for ec in ERROR_CLASSES}
    top = max(p.max() for p in pools.values()) * 1.02
    grid = np.linspace(0.0, max(top, 1e-6), 256)
    header = ["threshold"] + [f"{nc}_{ec}" for nc in NODE_CLASSES for ec in ERROR_CLASSES]
    sorted_pools = {k: np.sort(v) for k, v in pools.items()}
    rows = []
    for t in grid:
        row = [t] + [np.searchsorted(sorted_pools[(nc, ec)], t, side="left")
                     / sorted_pools[(nc, ec)].size
                     for nc in NODE_CLASSES for ec in ERROR_CLASSES]
        rows.append(row)
    return header, rows


def cmd_simulate(args) -> int:
    cfg = _apply_overrides(parse_config(args.config), args)
    with _OutputSet(args.out_dir) as out:
        return _run_simulate(cfg, args, out)


def _run_simulate(cfg, args, out) -> int:
    results = monte_carlo_runs(cfg, record_trace=False)
    trace_run = monte_carlo_runs(cfg, n_runs=1, record_trace=True)[0]

    reports = summarize_runs(results)
    summary = {
        "runs": len(results),
        "burn_in_epochs": results[0].burn_in_epochs,
        "epochs": results[0].epochs,
        "convergence_epochs": [r.convergence_epoch for r in results],
        "reports": {nc: {ec: reports[nc][ec].to_dict() for ec in ERROR_CLASSES}
                    for nc in NODE_CLASSES},
        "diagnostics": {
            "n_measurements": int(sum(r.diagnostics["n_measurements"] for r in results)),
            "n_gated": int(sum(r.diagnostics["n_gated"] for r in results)),
            "n_used": int(sum(r.diagnostics["n_used"] for r in results)),
            "init_fallbacks": [fb for r in results
                               for fb in r.diagnostics["init_fallbacks"]],
        },
    }
    write_json(out.path("summary.json"), summary)
    header, rows = _cdf_rows(results)
    write_csv(out.path("cdf.csv"), header, rows)
    write_csv(out.path("trace.csv"),
              ["epoch", "node_id", "kind", "est_x", "est_y", "est_z",
               "err_m", "cov_trace"],
              trace_run.trace)
    if not args.no_figures:
        report.save_error_cdf_figure(reports, out.path("cdf.png"))
        report.save_error_trace_figure(trace_run, out.path("trace.png"))
    _write_manifest(out, "simulate", cfg)
    print(f"simulate: {len(results)} runs x {results[0].epochs} epochs -> {out.out_dir}")
    return 0


def cmd_sweep(args) -> int:
    cfg = _apply_overrides(parse_config(args.config), args)
    anchors = [int(v) for v in args.anchors.split(",")] if args.anchors else None
    targets = [int(v) for v in args.targets.split(",")] if args.targets else None
    with _OutputSet(args.out_dir) as out:
        return _run_sweep(cfg, args, out, anchors, targets)


def _run_sweep(cfg, args, out, anchors, targets) -> int:
    result = sweep(cfg, anchors, targets, args.runs_per_cell)
    write_csv(out.path("sweep.csv"),
              ["anchors", "targets", "p_sub1m_3d", "runs"], result.rows())
    if not args.no_figures:
        report.save_sweep_figure(result, out.path("sweep.png"))
    _write_manifest(out, "sweep", cfg)
    print(f"sweep: {len(result.anchor_counts)}x{len(result.target_counts)} cells "
          f"x {result.runs_per_cell} runs -> {out.out_dir}")
    return 0


def cmd_geometry_compare(args) -> int:
    cfg = _apply_overrides(parse_config(args.config), args)
    with _OutputSet(args.out_dir) as out:
        return _run_geometry_compare(cfg, args, out)


def _run_geometry_compare(cfg, args, out) -> int:
    comparison = compare_geometries(cfg)
    rows = []
    for kind in ("collinear", "noncollinear"):
        for nc in NODE_CLASSES:
            for ec in ERROR_CLASSES:
                rep = comparison.report(kind, nc, ec)
                thr = next(iter(rep.p_below))
                rows.append([kind, nc, ec, rep.median, rep.percentiles[90],
                             rep.percentiles[95], thr, rep.p_below[thr]])
    write_csv(out.path("geometry_compare.csv"),
              ["layout", "nodes", "error", "median_m", "p90_m", "p95_m",
               "threshold_m", "p_below"], rows)
    summary = {kind: {nc: {ec: comparison.report(kind, nc, ec).to_dict()
                           for ec in ERROR_CLASSES} for nc in NODE_CLASSES}
               for kind in ("collinear", "noncollinear")}
    write_json(out.path("summary.json"), summary)
    if not args.no_figures:
        report.save_geometry_figure(comparison, out.path("geometry_compare.png"))
    _write_manifest(out, "geometry-compare", cfg)
    col = comparison.report("collinear", "joint", "2d").median
    non = comparison.report("noncollinear", "joint", "2d").median
    print(f"geometry-compare: joint 2D median collinear {col:.3f} m vs "
          f"noncollinear {non:.3f} m -> {out.out_dir}")
    return 0


def cmd_calibrate(args) -> int:
    sigma = calibrate_sigma(args.p, args.bound)
    print(f"{sigma:.5g}")
    return 0


def cmd_measure_bench(args) -> int:
    cfg = _apply_overrides(parse_config(args.config), args)
    with _OutputSet(args.out_dir) as out:
        return _run_measure_bench(cfg, args, out)


def _run_measure_bench(cfg, args, out) -> int:
    mcfg = cfg.measurement_config()
    rng = np.random.default_rng(cfg.seed)

    fov = math.radians(60.0)
    aoa_err_deg = []
    for _ in range(args.trials):
        az = rng.uniform(-fov, fov)
        el = rng.uniform(-fov, fov)
        powers = sig.beam_rsrp(mcfg.array, mcfg.codebook, az, el, cfg.snr_db, rng)
        est = sig.beam_sweep_aoa(powers, mcfg.codebook)
        aoa_err_deg.append(math.degrees(abs(est.azimuth - az)))
        aoa_err_deg.append(math.degrees(abs(est.elevation - el)))
    aoa_err_deg = np.asarray(aoa_err_deg)

    toa_err_m = []
    for dist in np.linspace(1.0, 60.0, 30):
        paths = sig.PathList.line_of_sight(dist, 0.0, 0.0, cfg.ofdm.carrier_freq)
        est = sig.ofdm_toa(sig.ofdm_cfr(paths, cfg.ofdm), cfg.ofdm)
        toa_err_m.append(abs(est - dist / SPEED_OF_LIGHT) * SPEED_OF_LIGHT)
    toa_err_m = np.asarray(toa_err_m)

    # Two-path first arrival: quadrature relative phase keeps the arrivals
    # distinguishable down to one resolution cell of separation.
    two_path_err = []
    for sep in (3.1, 4.0, 6.17, 9.25, 12.0):
        tau1 = 10.0 / SPEED_OF_LIGHT
        tau2 = (10.0 + sep) / SPEED_OF_LIGHT
        paths = sig.PathList(np.array([tau1, tau2]),
                             np.array([1.0, 1.0j]),
                             np.zeros(2), np.zeros(2))
        est = sig.ofdm_toa(sig.ofdm_cfr(paths, cfg.ofdm), cfg.ofdm)
        two_path_err.append(abs(est - tau1) * SPEED_OF_LIGHT)
    two_path_err = np.asarray(two_path_err)

    rows = [
        ["aoa_sweep", "p50_deg", float(np.percentile(aoa_err_deg, 50))],
        ["aoa_sweep", "p95_deg", float(np.percentile(aoa_err_deg, 95))],
        ["aoa_sweep", "max_deg", float(aoa_err_deg.max())],
        ["aoa_sweep", "snr_db", cfg.snr_db],
        ["aoa_sweep", "samples", aoa_err_deg.size],
        ["ofdm_single_path", "max_err_m", float(toa_err_m.max())],
        ["ofdm_single_path", "samples", toa_err_m.size],
        ["ofdm_two_path", "max_err_m", float(two_path_err.max())],
        ["ofdm_two_path", "samples", two_path_err.size],
    ]
    write_csv(out.path("measure_bench.csv"), ["benchmark", "metric", "value"], rows)
    if not args.no_figures:
        report.save_bench_figure(aoa_err_deg, toa_err_m, out.path("measure_bench.png"))
    _write_manifest(out, "measure-bench", cfg)
    print(f"measure-bench: AoA p95 {np.percentile(aoa_err_deg, 95):.3f} deg, "
          f"single-path max {toa_err_m.max():.4f} m -> {out.out_dir}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="locfuse",
        description="Joint positioning and tracking simulator for sidelink "
                    "delay/angle measurements.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, needs_config=True):
        if needs_config:
            p.add_argument("--config", required=True,
                           help="JSON config file (or a manifest.json)")
        p.add_argument("--seed", type=int, default=None, help="seed override")
        p.add_argument("--out-dir", default=".", help="output directory")
        p.add_argument("--no-figures", action="store_true",
                       help="skip PNG rendering")

    p = sub.add_parser("simulate", help="Monte Carlo scenario run")
    common(p)
    p.add_argument("--mode", choices=("statistical", "signal"))
    p.add_argument("--measurements",
                   choices=("toa", "tdoa", "aoa", "toa+aoa", "tdoa+aoa"))
    p.add_argument("--runs", type=int, default=None,
                   help="Monte Carlo runs override")
    p.set_defaults(fn=cmd_simulate)

    p = sub.add_parser("sweep", help="anchor/target count sweep")
    common(p)
    p.add_argument("--anchors", help="comma-separated anchor counts")
    p.add_argument("--targets", help="comma-separated target counts")
    p.add_argument("--runs-per-cell", type=int, default=None)
    p.set_defaults(fn=cmd_sweep)

    p = sub.add_parser("geometry-compare",
                       help="collinear vs non-collinear paired runs")
    common(p)
    p.add_argument("--measurements",
                   choices=("toa", "tdoa", "aoa", "toa+aoa", "tdoa+aoa"))
    p.add_argument("--runs", type=int, default=None)
    p.set_defaults(fn=cmd_geometry_compare)

    p = sub.add_parser("calibrate",
                       help="Gaussian sigma for a central coverage bound")
    p.add_argument("--p", type=float, required=True,
                   help="central probability, e.g. 0.95")
    p.add_argument("--bound", type=float, required=True,
                   help="two-sided error bound")
    p.set_defaults(fn=cmd_calibrate)

    p = sub.add_parser("measure-bench",
                       help="signal-level estimator benchmarks")
    common(p)
    p.add_argument("--trials", type=int, default=600,
                   help="AoA Monte Carlo trials")
    p.set_defaults(fn=cmd_measure_bench)
    return parser


def dispatch(args) -> int:
    try:
        return args.fn(args)
    except _HANDLED_ERRORS as exc:
        print("LOCFUSE-ERROR: " + json.dumps(
            {"command": args.command, "type": type(exc).__name__,
             "message": str(exc)}), file=sys.stderr)
        return 2


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return dispatch(args)


if __name__ == "__main__":
    sys.exit(main())
