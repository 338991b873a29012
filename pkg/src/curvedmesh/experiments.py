"""Deformation experiment drivers: rotation, translation, coarsening.

Each experiment moves the nodes on the tagged analytic geometry step by
step, repairing the mesh after every step with smoothing alone, smoothing
plus flips, or the full operation schedule, and records a per-step trace.
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass, field

import numpy as np

from .distortion import DistortionConfig, batch_distortion
from .fixtures import CIRCLE_TAG, builtin_fixture
from .io import read_mesh, write_json, write_vtk
from .mesh import HighOrderMesh, MeshTopology, _facet_slot_table, facet_incidence
from .operations import OperationConfigs
from .schedules import SweepConfig, adapt_all, collapse_sweep, flip_sweep
from .smoothing import SmoothConfig, smooth_mesh

VARIANTS = ("smoothing", "flips", "all")

DEFAULT_FIXTURE = {
    "rotation2d": "circle_in_square",
    "rotation3d": "sphere_in_cube",
    "coarsen2d": "fine_circle_hole",
    "translation2d": "circle_in_rectangle",
    "translation3d": "sphere_in_prism",
}


@dataclass
class ExperimentSpec:
    which: str
    variant: str = "flips"
    steps: int = 18
    step_degrees: float = 5.0
    step_length: float = 0.05
    fixture: str | None = None      # path or builtin name
    output_dir: str | None = None
    small: bool = False
    snapshot_stride: int = 0
    l0: float | str = "mean"
    distortion: DistortionConfig = field(default_factory=DistortionConfig)
    smooth: SmoothConfig = field(default_factory=SmoothConfig)
    sweep: SweepConfig | None = None

    def __post_init__(self):
        if self.which not in DEFAULT_FIXTURE:
            raise ValueError(f"unknown experiment {self.which!r}")
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}")
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        if self.step_degrees <= 0 or self.step_length <= 0:
            raise ValueError("step magnitudes must be positive")


@dataclass
class TraceRow:
    step: int
    eta_max: float
    eta_agg: float
    elements: int
    flips: int = 0
    collapses: int = 0
    splits: int = 0


@dataclass
class ExperimentResult:
    spec: ExperimentSpec
    mesh: HighOrderMesh
    rows: list
    completed: bool


def geometry_node_ids(mesh: HighOrderMesh) -> np.ndarray:
    """Ids of all nodes on geometry-tagged boundary facets."""
    slot_table = _facet_slot_table(mesh.master)
    inc = facet_incidence(mesh)
    nv = mesh.dim + 1
    ids = set()
    for f, t in mesh.boundary_tags.items():
        if t not in mesh.geometry or f not in inc:
            continue
        eid = inc[f][0]
        row = mesh.elements[eid]
        gl = {int(g): i for i, g in enumerate(row[:nv])}
        lf = tuple(sorted(gl[g] for g in f))
        ids.update(int(x) for x in row[list(slot_table[lf])])
    return np.array(sorted(ids), dtype=int)


def rotate_geometry_nodes(mesh: HighOrderMesh, degrees: float) -> None:
    """Rigidly rotate the geometry-bound nodes about the geometry center
    (z axis in 3D), then re-project to kill drift."""
    geo = mesh.geometry[CIRCLE_TAG]
    c = np.asarray(geo.center)
    ids = geometry_node_ids(mesh)
    a = np.deg2rad(degrees)
    R2 = np.array([[np.cos(a), -np.sin(a)], [np.sin(a), np.cos(a)]])
    x = mesh.nodes[ids] - c
    if mesh.dim == 2:
        x = x @ R2.T
    else:
        x[:, :2] = x[:, :2] @ R2.T
    mesh.nodes[ids] = geo.project(c + x)


def translate_geometry_nodes(mesh: HighOrderMesh, delta) -> None:
    """Translate the geometry-bound nodes and the descriptor itself."""
    delta = np.asarray(delta, dtype=float)
    geo = mesh.geometry[CIRCLE_TAG]
    moved = type(geo)(tuple(np.asarray(geo.center) + delta), geo.radius)
    mesh.geometry[CIRCLE_TAG] = moved
    ids = geometry_node_ids(mesh)
    mesh.nodes[ids] = moved.project(mesh.nodes[ids] + delta)


def _trace_quality(mesh, distortion):
    eta, _, valid = batch_distortion(mesh, distortion)
    if valid.all():
        return float(eta.max()), float(np.mean(eta ** 2))
    return np.inf, np.inf


def load_fixture(spec: ExperimentSpec) -> HighOrderMesh:
    name = spec.fixture or DEFAULT_FIXTURE[spec.which]
    if os.path.exists(name):
        return read_mesh(name)
    return builtin_fixture(name, degree=4, small=spec.small)


def run_experiment(spec: ExperimentSpec, mesh: HighOrderMesh | None = None,
                   progress=None) -> ExperimentResult:
    mesh = mesh if mesh is not None else load_fixture(spec)
    sweep = spec.sweep if spec.sweep is not None else SweepConfig(l0=spec.l0)
    ops = OperationConfigs(distortion=spec.distortion)
    rows = []
    m0, a0 = _trace_quality(mesh, spec.distortion)
    rows.append(TraceRow(0, m0, a0, mesh.num_elements))
    completed = True

    if spec.which == "coarsen2d":
        one = SweepConfig(tmin_2d=sweep.tmin_2d, tmin_3d=sweep.tmin_3d,
                          length_ratio_threshold=sweep.length_ratio_threshold,
                          l0=sweep.resolve_l0(mesh), max_sweeps=1)
        for step in range(1, spec.steps + 1):
            rep = collapse_sweep(mesh, one, ops)
            smooth_mesh(mesh, spec.smooth, spec.distortion)
            m, a = _trace_quality(mesh, spec.distortion)
            rows.append(TraceRow(step, m, a, mesh.num_elements,
                                 collapses=rep.accepted))
            _maybe_snapshot(spec, mesh, step)
            if progress:
                progress(rows[-1])
            if rep.accepted == 0:
                break
        return ExperimentResult(spec, mesh, rows, True)

    rotation = spec.which.startswith("rotation")
    for step in range(1, spec.steps + 1):
        if rotation:
            rotate_geometry_nodes(mesh, spec.step_degrees)
        else:
            translate_geometry_nodes(mesh, (spec.step_length,) +
                                     (0.0,) * (mesh.dim - 1))
        smooth_mesh(mesh, spec.smooth, spec.distortion)
        flips = collapses = splits = 0
        if spec.variant == "flips":
            rep = flip_sweep(mesh, sweep, ops)
            flips = rep.accepted
            smooth_mesh(mesh, spec.smooth, spec.distortion)
        elif spec.variant == "all":
            rep = adapt_all(mesh, sweep, ops, spec.smooth)
            flips = rep.counts["flips"]
            collapses = rep.counts["collapses"]
            splits = rep.counts["splits"]
            smooth_mesh(mesh, spec.smooth, spec.distortion)
        m, a = _trace_quality(mesh, spec.distortion)
        rows.append(TraceRow(step, m, a, mesh.num_elements,
                             flips, collapses, splits))
        _maybe_snapshot(spec, mesh, step)
        if progress:
            progress(rows[-1])
        if not np.isfinite(m):
            completed = False
            break
    return ExperimentResult(spec, mesh, rows, completed)


def _maybe_snapshot(spec: ExperimentSpec, mesh, step: int) -> None:
    if not spec.snapshot_stride or not spec.output_dir:
        return
    if step % spec.snapshot_stride:
        return
    os.makedirs(spec.output_dir, exist_ok=True)
    eta, _, _ = batch_distortion(mesh, spec.distortion)
    path = os.path.join(spec.output_dir,
                        f"{spec.which}_{spec.variant}_{step:04d}.vtk")
    write_vtk(mesh, path, np.where(np.isfinite(eta), eta, -1.0))


def write_trace(rows, path) -> None:
    """Deterministic CSV trace."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["step", "eta_max", "eta_agg", "elements",
                    "flips", "collapses", "splits"])
        for r in rows:
            w.writerow([r.step, _num(r.eta_max), _num(r.eta_agg), r.elements,
                        r.flips, r.collapses, r.splits])


def _num(x: float) -> str:
    return "inf" if np.isinf(x) else f"{x:.10g}"


def finalize_experiment(result: ExperimentResult, trace_path=None) -> None:
    spec = result.spec
    if spec.output_dir:
        os.makedirs(spec.output_dir, exist_ok=True)
        write_json(result.mesh, os.path.join(
            spec.output_dir, f"{spec.which}_{spec.variant}_final.json"))
        if trace_path is None:
            trace_path = os.path.join(spec.output_dir,
                                      f"{spec.which}_{spec.variant}_trace.csv")
    if trace_path:
        write_trace(result.rows, trace_path)
