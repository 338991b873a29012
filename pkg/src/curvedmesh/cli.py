"""Command-line interface: smooth, adapt, report, experiment.

Exit codes: 0 success, 1 usage or I/O error, 2 quality failure (invalid
elements remain or an experiment step dead-ends).
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from .distortion import DistortionConfig, find_invalid_elements
from .experiments import (ExperimentSpec, finalize_experiment, load_fixture,
                          run_experiment)
from .io import quality_report, read_mesh, write_mesh
from .operations import OperationConfigs
from .schedules import SweepConfig, collapse_sweep, flip_sweep, split_sweep
from .smoothing import SmoothConfig, smooth_mesh


def _add_common(p):
    p.add_argument("--quad-order", type=int, default=None,
                   help="quadrature order for distortion integrals")
    p.add_argument("--alpha", type=float, default=1e-3,
                   help="regularization constant of the delta heuristic")
    p.add_argument("--seed", type=int, default=None,
                   help="reserved; all runs are deterministic")


def _distortion(args) -> DistortionConfig:
    return DistortionConfig(alpha=args.alpha, quadrature_order=args.quad_order)


def _sweep(args, dist=None) -> SweepConfig:
    l0 = getattr(args, "l0", "mean")
    if isinstance(l0, str) and l0 != "mean":
        l0 = float(l0)
    kw = {}
    if getattr(args, "tmin", None) is not None:
        kw = {"tmin_2d": args.tmin, "tmin_3d": args.tmin}
    return SweepConfig(l0=l0, **kw)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="curvedmesh",
        description="Local element operations and smoothing for curved "
                    "simplex meshes")
    sub = ap.add_subparsers(dest="command", required=True)

    ps = sub.add_parser("smooth", help="untangle and smooth a mesh")
    ps.add_argument("--input", required=True)
    ps.add_argument("--output", required=True)
    _add_common(ps)

    pa = sub.add_parser("adapt", help="run operation sweeps and smoothing")
    pa.add_argument("--input", required=True)
    pa.add_argument("--output", required=True)
    pa.add_argument("--l0", default="auto",
                    help="ideal edge length, or 'auto' for the current mean")
    pa.add_argument("--ops", default="flips,collapse,split",
                    help="comma list from: flips, collapse, split")
    pa.add_argument("--tmin", type=float, default=None)
    _add_common(pa)

    pr = sub.add_parser("report", help="print a mesh quality report")
    pr.add_argument("--input", required=True)
    pr.add_argument("--format", choices=("json", "csv", "text"),
                    default="text")
    _add_common(pr)

    pe = sub.add_parser("experiment", help="run a deformation experiment")
    pe.add_argument("--which", required=True,
                    choices=("rotation2d", "rotation3d", "coarsen2d",
                             "translation2d", "translation3d"))
    pe.add_argument("--variant", choices=("smoothing", "flips", "all"),
                    default="flips")
    pe.add_argument("--steps", type=int, default=None)
    pe.add_argument("--step-deg", type=float, default=5.0)
    pe.add_argument("--step-len", type=float, default=0.05)
    pe.add_argument("--fixture", default=None,
                    help="mesh file or builtin fixture name")
    pe.add_argument("--output-dir", default=None)
    pe.add_argument("--trace", default=None, help="per-step CSV path")
    pe.add_argument("--snapshot-stride", type=int, default=0)
    pe.add_argument("--small", action="store_true",
                    help="reduced fixtures for quick runs")
    pe.add_argument("--l0", default="mean")
    pe.add_argument("--tmin", type=float, default=None)
    _add_common(pe)
    return ap


def cmd_smooth(args) -> int:
    try:
        mesh = read_mesh(args.input)
    except (OSError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    dist = _distortion(args)
    rep = smooth_mesh(mesh, SmoothConfig(), dist)
    write_mesh(mesh, args.output)
    invalid = find_invalid_elements(mesh, dist)
    print(quality_report(mesh, dist, format="text"))
    print(f"sweeps {rep.sweeps}; eta_agg {rep.eta_agg_before:.6g} -> "
          f"{rep.eta_agg_after:.6g}")
    if invalid:
        print(f"invalid elements remain: {invalid}", file=sys.stderr)
        return 2
    return 0


def cmd_adapt(args) -> int:
    try:
        mesh = read_mesh(args.input)
    except (OSError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    ops_list = [s.strip() for s in args.ops.split(",") if s.strip()]
    bad = set(ops_list) - {"flips", "collapse", "split"}
    if bad or not ops_list:
        print(f"error: invalid --ops {args.ops!r}", file=sys.stderr)
        return 1
    dist = _distortion(args)
    args.l0 = "mean" if args.l0 == "auto" else args.l0
    sweep = _sweep(args)
    sweep = SweepConfig(tmin_2d=sweep.tmin_2d, tmin_3d=sweep.tmin_3d,
                        length_ratio_threshold=sweep.length_ratio_threshold,
                        l0=sweep.resolve_l0(mesh), max_sweeps=sweep.max_sweeps)
    opcfg = OperationConfigs(distortion=dist)
    counts = {"splits": 0, "collapses": 0, "flips": 0}
    if "split" in ops_list:
        counts["splits"] = split_sweep(mesh, sweep, opcfg).accepted
    if "collapse" in ops_list:
        counts["collapses"] = collapse_sweep(mesh, sweep, opcfg).accepted
    smooth_mesh(mesh, SmoothConfig(), dist)
    if "flips" in ops_list:
        counts["flips"] = flip_sweep(mesh, sweep, opcfg).accepted
    smooth_mesh(mesh, SmoothConfig(), dist)
    write_mesh(mesh, args.output)
    print(quality_report(mesh, dist, format="text"))
    print(f"operations: {counts}")
    if find_invalid_elements(mesh, dist):
        return 2
    return 0


def cmd_report(args) -> int:
    try:
        mesh = read_mesh(args.input)
    except (OSError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    print(quality_report(mesh, _distortion(args), format=args.format))
    return 0


def cmd_experiment(args) -> int:
    steps = args.steps
    if steps is None:
        if args.which.startswith("rotation"):
            steps = int(round(90.0 / args.step_deg))
        elif args.which.startswith("translation"):
            steps = int(round(2.0 / args.step_len))
        else:
            steps = 100
    try:
        spec = ExperimentSpec(
            which=args.which, variant=args.variant, steps=steps,
            step_degrees=args.step_deg, step_length=args.step_len,
            fixture=args.fixture, output_dir=args.output_dir,
            small=args.small, snapshot_stride=args.snapshot_stride,
            l0="mean" if args.l0 == "mean" else float(args.l0),
            distortion=_distortion(args))
        mesh = load_fixture(spec)
    except (OSError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1

    def progress(row):
        print(f"step {row.step:4d}  max {row.eta_max:10.6g}  "
              f"agg {row.eta_agg:10.6g}  E {row.elements:6d}  "
              f"flips {row.flips:4d}  collapses {row.collapses:4d}  "
              f"splits {row.splits:4d}", flush=True)

    result = run_experiment(spec, mesh, progress=progress)
    finalize_experiment(result, trace_path=args.trace)
    if not result.completed:
        print("experiment stopped early: invalid elements remain",
              file=sys.stderr)
        return 2
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    handlers = {"smooth": cmd_smooth, "adapt": cmd_adapt,
                "report": cmd_report, "experiment": cmd_experiment}
    return handlers[args.command](args)


if __name__ == "__main__":
    sys.exit(main())
