"""Greedy sweep drivers for flips, collapses, splits, and their combination.

Each sweep builds a priority queue (descending), applies operations down
the queue while removing invalidated entries, and repeats until a sweep
performs no operation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .distortion import DistortionConfig, batch_distortion
from .mesh import HighOrderMesh, MeshTopology, curved_edge_lengths, edge_list, make_patch
from .operations import (OperationConfigs, apply_local_operation,
                         collapse_edge, flip_candidates, split_elements)
from .smoothing import SmoothConfig, smooth_mesh


@dataclass(frozen=True)
class SweepConfig:
    """Thresholds of the sweep algorithms."""

    tmin_2d: float = 1.5
    tmin_3d: float = 2.0
    length_ratio_threshold: float = 1.5
    l0: float | str = "mean"     # ideal edge length, or "mean" of current
    max_sweeps: int = 100

    def __post_init__(self):
        if self.tmin_2d <= 1.0 or self.tmin_3d <= 1.0:
            raise ValueError("distortion thresholds must exceed 1")
        if self.length_ratio_threshold <= 1.0:
            raise ValueError("length ratio threshold must exceed 1")
        if not isinstance(self.l0, str) and self.l0 <= 0.0:
            raise ValueError("ideal edge length must be positive")

    def tmin(self, dim: int) -> float:
        return self.tmin_2d if dim == 2 else self.tmin_3d

    def resolve_l0(self, mesh: HighOrderMesh) -> float:
        if isinstance(self.l0, str):
            if self.l0 != "mean":
                raise ValueError(f"unknown ideal-length policy {self.l0!r}")
            edges = edge_list(mesh)
            return float(np.mean(curved_edge_lengths(mesh, edges)))
        return float(self.l0)


class WorkQueue:
    """Descending-priority entries with removal of invalidated ids."""

    def __init__(self, entries):
        # entries: iterable of (key_id, priority); key_id is hashable
        self.entries = sorted(entries, key=lambda kv: (-kv[1], kv[0]))
        self.removed = set()

    def __iter__(self):
        for key, prio in self.entries:
            if key not in self.removed:
                yield key, prio

    def __len__(self):
        return sum(1 for k, _ in self.entries if k not in self.removed)

    def remove(self, keys):
        self.removed.update(keys)

    def remap(self, mapping):
        """Apply an old->new id mapping; unmapped (-1) entries drop out."""
        out = []
        for key, prio in self.entries:
            if key in self.removed:
                continue
            nk = mapping(key)
            if nk is not None:
                out.append((nk, prio))
        self.entries = out
        self.removed = set()


@dataclass
class SweepReport:
    kind: str
    sweeps: int = 0
    attempted: int = 0
    accepted: int = 0
    log: list = field(default_factory=list)   # (classification, before, after)
    eta_max_before: float = np.nan
    eta_agg_before: float = np.nan
    eta_max_after: float = np.nan
    eta_agg_after: float = np.nan


def _mesh_quality(mesh, distortion) -> tuple:
    if mesh.num_elements == 0:
        return 0.0, 0.0
    eta, _, valid = batch_distortion(mesh, distortion)
    if valid.all():
        return float(eta.max()), float(np.mean(eta ** 2))
    return np.inf, np.inf


def flip_sweep(mesh: HighOrderMesh, sweep: SweepConfig | None = None,
               ops: OperationConfigs | None = None) -> SweepReport:
    """Greedy curved flips driven by a floating distortion threshold.

    Elements whose patch neighborhood has not changed since all their
    candidates failed are skipped; outcomes are deterministic either way.
    """
    sweep = sweep if sweep is not None else SweepConfig()
    ops = ops if ops is not None else OperationConfigs()
    rep = SweepReport("flips")
    rep.eta_max_before, rep.eta_agg_before = _mesh_quality(mesh, ops.distortion)
    clean: set = set()
    for _ in range(sweep.max_sweeps):
        rep.sweeps += 1
        eta, _, valid = batch_distortion(mesh, ops.distortion)
        D = np.where(valid, eta, np.inf)
        T = min(sweep.tmin(mesh.dim), float(D.min()))
        queue = WorkQueue([(int(e), float(D[e])) for e in np.nonzero(D > T)[0]])
        topo = MeshTopology(mesh)
        flips = 0
        for eid, _prio in queue:
            if eid in clean:
                continue
            cands = flip_candidates(mesh, eid, topo)
            best = None
            for idx, cand in enumerate(cands):
                patch = make_patch(mesh, cand.old_elements, topo)
                res = apply_local_operation(mesh, patch, cand, ops,
                                            require_improvement=True,
                                            commit=False)
                rep.attempted += 1
                if res.accepted and (best is None or
                                     res.eta_agg_after < best[0]):
                    best = (res.eta_agg_after, idx, cand)
            if best is None:
                clean.add(eid)
                continue
            _, _, cand = best
            patch = make_patch(mesh, cand.old_elements, topo)
            res = apply_local_operation(mesh, patch, cand, ops,
                                        require_improvement=True)
            if not res.accepted:
                clean.add(eid)
                continue
            flips += 1
            rep.accepted += 1
            rep.log.append((cand.classification, res.eta_agg_before,
                            res.eta_agg_after))
            emap = res.element_map
            queue.remove([int(e) for e in cand.old_elements])
            # invalidate skip-cache entries adjacent to the change
            changed_nodes = set(
                int(v) for ne in res.new_element_ids
                for v in mesh.elements[ne, :mesh.dim + 1])
            clean = {int(emap[e]) for e in clean if int(emap[e]) >= 0}
            clean = {e for e in clean
                     if not any(int(v) in changed_nodes
                                for v in mesh.elements[e, :mesh.dim + 1])}
            queue.remap(lambda k: int(emap[k]) if emap[k] >= 0 else None)
            topo = MeshTopology(mesh)
        if flips == 0:
            break
    rep.eta_max_after, rep.eta_agg_after = _mesh_quality(mesh, ops.distortion)
    return rep


def _edge_queue(mesh, l0, threshold, mode):
    edges = edge_list(mesh)
    lengths = curved_edge_lengths(mesh, edges)
    entries = []
    for e, L in zip(edges, lengths):
        ratio = (l0 / L) if mode == "collapse" else (L / l0)
        if ratio > threshold:
            entries.append((e.verts, float(ratio)))
    return WorkQueue(entries)


def collapse_sweep(mesh: HighOrderMesh, sweep: SweepConfig | None = None,
                   ops: OperationConfigs | None = None) -> SweepReport:
    """Collapse short edges (l0 / length > threshold), shortest first."""
    sweep = sweep if sweep is not None else SweepConfig()
    ops = ops if ops is not None else OperationConfigs()
    l0 = sweep.resolve_l0(mesh)
    rep = SweepReport("collapses")
    rep.eta_max_before, rep.eta_agg_before = _mesh_quality(mesh, ops.distortion)
    for _ in range(sweep.max_sweeps):
        rep.sweeps += 1
        queue = _edge_queue(mesh, l0, sweep.length_ratio_threshold, "collapse")
        topo = MeshTopology(mesh)
        collapses = 0
        for (a, b), _prio in queue:
            res = collapse_edge(mesh, (a, b), ops, topology=topo)
            rep.attempted += 1
            if not res.accepted:
                continue
            collapses += 1
            rep.accepted += 1
            rep.log.append(("collapse", res.eta_agg_before, res.eta_agg_after))
            touched = set(res.touched_vertices)
            queue.remove([k for k, _ in queue
                          if k[0] in touched or k[1] in touched])
            nmap = res.node_map

            def remap_edge(key, nmap=nmap):
                na, nb = int(nmap[key[0]]), int(nmap[key[1]])
                if na < 0 or nb < 0:
                    return None
                return (na, nb) if na < nb else (nb, na)

            queue.remap(remap_edge)
            topo = MeshTopology(mesh)
        if collapses == 0:
            break
    rep.eta_max_after, rep.eta_agg_after = _mesh_quality(mesh, ops.distortion)
    return rep


def split_sweep(mesh: HighOrderMesh, sweep: SweepConfig | None = None,
                ops: OperationConfigs | None = None) -> SweepReport:
    """Split long edges (length / l0 > threshold), longest first."""
    sweep = sweep if sweep is not None else SweepConfig()
    ops = ops if ops is not None else OperationConfigs()
    l0 = sweep.resolve_l0(mesh)
    rep = SweepReport("splits")
    rep.eta_max_before, rep.eta_agg_before = _mesh_quality(mesh, ops.distortion)
    for _ in range(sweep.max_sweeps):
        rep.sweeps += 1
        queue = _edge_queue(mesh, l0, sweep.length_ratio_threshold, "split")
        topo = MeshTopology(mesh)
        splits = 0
        queued = {k for k, _ in queue}
        for key, _prio in queue:
            # template choice: mark every queued edge of the incident elements
            nv = mesh.dim + 1
            corner = mesh.elements[:, :nv]
            inc = [e for e in range(mesh.num_elements)
                   if key[0] in corner[e] and key[1] in corner[e]]
            if not inc:
                continue
            marked = {key}
            from .operations import _element_edge_keys
            for e in inc:
                marked.update(k for k in _element_edge_keys(mesh, e)
                              if k in queued and k not in queue.removed)
            res = split_elements(mesh, marked, ops, topology=topo)
            rep.attempted += 1
            if not res.accepted:
                queue.remove([key])
                continue
            splits += 1
            rep.accepted += 1
            rep.log.append(("split", res.eta_agg_before, res.eta_agg_after))
            touched = set(res.touched_vertices)
            queue.remove([k for k, _ in queue
                          if k[0] in touched or k[1] in touched])
            nmap = res.node_map

            def remap_edge(key, nmap=nmap):
                na, nb = int(nmap[key[0]]), int(nmap[key[1]])
                if na < 0 or nb < 0:
                    return None
                return (na, nb) if na < nb else (nb, na)

            queue.remap(remap_edge)
            queued = {k for k, _ in queue}
            topo = MeshTopology(mesh)
        if splits == 0:
            break
    rep.eta_max_after, rep.eta_agg_after = _mesh_quality(mesh, ops.distortion)
    return rep


@dataclass
class AdaptReport:
    splits: SweepReport
    collapses: SweepReport
    flips: SweepReport
    eta_max_before: float
    eta_agg_before: float
    eta_max_after: float
    eta_agg_after: float
    counts: dict = field(default_factory=dict)


def adapt_all(mesh: HighOrderMesh, sweep: SweepConfig | None = None,
              ops: OperationConfigs | None = None,
              smooth: SmoothConfig | None = None) -> AdaptReport:
    """Split sweeps, collapse sweeps, smoothing, flip sweeps, smoothing."""
    sweep = sweep if sweep is not None else SweepConfig()
    ops = ops if ops is not None else OperationConfigs()
    smooth = smooth if smooth is not None else SmoothConfig()
    m0, a0 = _mesh_quality(mesh, ops.distortion)
    # freeze the target length before any operation changes the inventory
    sweep_fixed = SweepConfig(tmin_2d=sweep.tmin_2d, tmin_3d=sweep.tmin_3d,
                              length_ratio_threshold=sweep.length_ratio_threshold,
                              l0=sweep.resolve_l0(mesh),
                              max_sweeps=sweep.max_sweeps)
    rs = split_sweep(mesh, sweep_fixed, ops)
    rc = collapse_sweep(mesh, sweep_fixed, ops)
    smooth_mesh(mesh, smooth, ops.distortion)
    rf = flip_sweep(mesh, sweep_fixed, ops)
    smooth_mesh(mesh, smooth, ops.distortion)
    m1, a1 = _mesh_quality(mesh, ops.distortion)
    return AdaptReport(rs, rc, rf, m0, a0, m1, a1,
                       counts={"splits": rs.accepted,
                               "collapses": rc.accepted,
                               "flips": rf.accepted})
