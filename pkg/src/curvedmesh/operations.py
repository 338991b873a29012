"""Local element operations on curved meshes.

Each operation identifies the affected patch, performs the reconnection as
a straight-sided one (frozen rim, interior nodes placed by the affine
vertex map), untangles/smooths the result, and accepts or rejects it.
Rejection leaves the mesh byte-identical: trials run on a copy that is
swapped in only on acceptance.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .distortion import DistortionConfig, batch_distortion
from .master import build_master_element, line_shape
from .mesh import (ElementPatch, HighOrderMesh, MeshTopology, canonical_node_key,
                   edge_curve_nodes, element_facets, shell_of_edge)
from .smoothing import SmoothConfig, smooth_patch


@dataclass(frozen=True)
class OperationConfigs:
    distortion: DistortionConfig = field(default_factory=DistortionConfig)
    smooth: SmoothConfig = field(default_factory=lambda: SmoothConfig(
        max_untangle_rounds=4))


@dataclass(frozen=True)
class Reconnection:
    """Straight-sided topology of a local operation."""

    old_elements: tuple
    new_elements: tuple          # vertex-connectivity tuples; -1 marks the
                                 # merged/new vertex to be created
    classification: str          # flip2_2, swap2_3, swap3_2, swap4_4,
                                 # collapse, split1_2, split1_4, split1_8


@dataclass
class OperationResult:
    accepted: bool
    eta_agg_before: float
    eta_agg_after: float
    reason: str                  # improved | accepted | no_improvement |
                                 # untangle_failed | not_applicable
    classification: str = ""
    node_map: np.ndarray | None = None      # old node id -> new id or -1
    element_map: np.ndarray | None = None   # old element id -> new id or -1
    new_element_ids: tuple = ()
    touched_vertices: tuple = ()


def _not_applicable(classification: str) -> OperationResult:
    return OperationResult(False, np.nan, np.nan, "not_applicable",
                           classification)


def _orient(mesh_nodes, conn, dim):
    """Vertex tuple reordered to positive straight-sided volume."""
    v = np.asarray([mesh_nodes[i] for i in conn])
    e = v[1:] - v[:1]
    det = np.linalg.det(e)
    if det < 0.0:
        conn = list(conn)
        conn[-1], conn[-2] = conn[-2], conn[-1]
        return tuple(conn)
    return tuple(conn)


class _Transfer:
    """Builds new curved elements for a reconnection on a trial mesh.

    Nodes on frozen rim facets are reused; every other node is created
    fresh, placed by the straight-sided vertex map, shared facets created
    once.  Explicit overrides (curved boundary samples, merged vertices)
    are seeded before building.
    """

    def __init__(self, mesh: HighOrderMesh, patch: ElementPatch):
        self.mesh = mesh
        self.master = mesh.master
        self.frozen = set(int(n) for n in patch.frozen_nodes)
        self.registry = {}
        for eid in patch.element_ids:
            row = mesh.elements[eid]
            for s in range(self.master.num_nodes):
                if self.master.node_kind[s] in ("vertex", "interior"):
                    continue
                nid = int(row[s])
                if nid not in self.frozen:
                    continue
                ent = self.master.node_entity[s]
                gids = tuple(int(row[v]) for v in ent)
                w = tuple(int(self.master.lattice[s][v]) for v in ent)
                self.registry[canonical_node_key(gids, w)] = nid
        self.new_nodes = []
        self.created = []
        self.created_frozen = set()
        self._base = mesh.num_nodes

    def add_node(self, pos, frozen=False) -> int:
        nid = self._base + len(self.new_nodes)
        self.new_nodes.append(np.asarray(pos, dtype=float))
        self.created.append(nid)
        if frozen:
            self.created_frozen.add(nid)
        return nid

    def seed(self, gids, weights, pos, frozen=False):
        """Pre-place one facet node (by canonical key) before building."""
        key = canonical_node_key(gids, weights)
        if key not in self.registry:
            self.registry[key] = self.add_node(pos, frozen)

    def build(self, new_conns):
        """Rows of full high-order connectivity for the new elements."""
        master = self.master
        K = master.num_nodes
        lat = master.lattice.astype(float) / master.degree
        rows = np.empty((len(new_conns), K), dtype=np.int64)
        nodes = self.mesh.nodes
        for e, conn in enumerate(new_conns):
            vxy = np.array([nodes[i] if i < self._base else
                            self.new_nodes[i - self._base] for i in conn])
            for s in range(K):
                kind = master.node_kind[s]
                if kind == "vertex":
                    rows[e, s] = conn[master.node_entity[s][0]]
                    continue
                pos = lat[s] @ vxy
                if kind == "interior":
                    rows[e, s] = self.add_node(pos)
                    continue
                ent = master.node_entity[s]
                gids = tuple(int(conn[v]) for v in ent)
                w = tuple(int(master.lattice[s][v]) for v in ent)
                key = canonical_node_key(gids, w)
                nid = self.registry.get(key)
                if nid is None:
                    nid = self.add_node(pos)
                    self.registry[key] = nid
                rows[e, s] = nid
        return rows

    def apply(self, old_eids, rows):
        """Mutate the trial mesh: drop old elements, append new ones.

        Returns (new element ids, patch over them with rim frozen)."""
        mesh = self.mesh
        if self.new_nodes:
            mesh.nodes = np.vstack([mesh.nodes, np.array(self.new_nodes)])
        keep = np.ones(mesh.num_elements, dtype=bool)
        keep[list(old_eids)] = False
        mesh.elements = np.vstack([mesh.elements[keep], rows])
        new_ids = tuple(range(mesh.num_elements - rows.shape[0],
                              mesh.num_elements))
        pnodes = np.unique(rows)
        frozen_mask = np.array([int(n) in self.frozen or
                                int(n) in self.created_frozen for n in pnodes])
        patch = ElementPatch(mesh=mesh, element_ids=new_ids,
                             free_nodes=pnodes[~frozen_mask],
                             frozen_nodes=pnodes[frozen_mask])
        return new_ids, patch


def straight_sided_transfer(mesh: HighOrderMesh, patch: ElementPatch,
                            reconnection: Reconnection, master=None):
    """Apply the reconnection with straight-sided node placement, in place.

    The patch rim keeps its curved nodes; all other nodes of the new
    elements are placed by the affine vertex map.  Returns (new element
    ids, patch over the new elements).
    """
    if master is not None and (master.dim != mesh.dim or
                               master.degree != mesh.degree):
        raise ValueError("master element does not match mesh dim/degree")
    old_count: dict = {}
    nv = mesh.dim + 1
    for eid in reconnection.old_elements:
        for f in element_facets(mesh.elements[eid, :nv], mesh.dim):
            old_count[f] = old_count.get(f, 0) + 1
    new_facets = set()
    for conn in reconnection.new_elements:
        new_facets.update(element_facets(np.asarray(conn), mesh.dim))
    # rim facets (patch-incidence one) must be covered by the new topology
    for f, cnt in old_count.items():
        if cnt == 1 and f not in new_facets:
            raise ValueError(f"reconnection drops rim facet {f}")
    tr = _Transfer(mesh, patch)
    rows = tr.build([tuple(int(v) for v in c) for c in reconnection.new_elements])
    return tr.apply(reconnection.old_elements, rows)


def _compact(mesh: HighOrderMesh):
    """Drop orphan nodes; remap elements and boundary tags. Returns node map."""
    used = np.unique(mesh.elements) if mesh.elements.size else np.array([], dtype=np.int64)
    remap = -np.ones(mesh.num_nodes, dtype=np.int64)
    remap[used] = np.arange(used.size)
    mesh.nodes = mesh.nodes[used]
    mesh.elements = remap[mesh.elements]
    tags = {}
    for f, t in mesh.boundary_tags.items():
        nf = tuple(sorted(int(remap[v]) for v in f))
        if all(v >= 0 for v in nf):
            tags[nf] = t
    mesh.boundary_tags = tags
    return remap


def _element_map(num_old: int, old_eids) -> np.ndarray:
    emap = -np.ones(num_old, dtype=np.int64)
    keep = np.ones(num_old, dtype=bool)
    keep[list(old_eids)] = False
    emap[keep] = np.arange(int(keep.sum()))
    return emap


def _patch_agg(mesh, eids, config) -> float:
    eta, _, valid = batch_distortion(mesh, config, eids)
    return float(np.mean(eta ** 2)) if valid.all() else np.inf


def _finish(mesh, trial, old_eids, new_patch, configs, classification,
            require_improvement, before, touched=(),
            tag_edits=None, commit=True) -> OperationResult:
    """Smooth the transferred patch, decide acceptance, commit or discard."""
    new_ids = new_patch.element_ids
    rep = smooth_patch(trial, new_patch, configs.smooth, configs.distortion)
    after = _patch_agg(trial, new_ids, configs.distortion)
    if not rep.untangled or not np.isfinite(after):
        return OperationResult(False, before, after, "untangle_failed",
                               classification, touched_vertices=touched)
    if require_improvement and not after < before:
        return OperationResult(False, before, after, "no_improvement",
                               classification, touched_vertices=touched)
    if not commit:
        reason = "improved" if after < before else "accepted"
        return OperationResult(True, before, after, reason, classification,
                               touched_vertices=touched)
    if tag_edits:
        tag_edits(trial)
    emap = _element_map(mesh.num_elements, old_eids)
    nmap = _compact(trial)
    new_ids = tuple(range(trial.num_elements - len(new_ids),
                          trial.num_elements))
    mesh.nodes = trial.nodes
    mesh.elements = trial.elements
    mesh.boundary_tags = trial.boundary_tags
    mesh.geometry = trial.geometry
    reason = "improved" if after < before else "accepted"
    return OperationResult(True, before, after, reason, classification,
                           node_map=nmap, element_map=emap,
                           new_element_ids=new_ids, touched_vertices=touched)


def apply_local_operation(mesh: HighOrderMesh, patch: ElementPatch,
                          reconnection: Reconnection,
                          configs: OperationConfigs | None = None,
                          require_improvement: bool = True,
                          commit: bool = True) -> OperationResult:
    """Straight-sided transfer + untangle/smooth + accept-or-restore.

    With commit=False the mesh is never modified and the result only says
    what would happen (used to rank competing candidates).
    """
    configs = configs if configs is not None else OperationConfigs()
    before = _patch_agg(mesh, patch.element_ids, configs.distortion)
    trial = mesh.copy()
    tpatch = ElementPatch(mesh=trial, element_ids=patch.element_ids,
                          free_nodes=patch.free_nodes,
                          frozen_nodes=patch.frozen_nodes)
    try:
        new_ids, npatch = straight_sided_transfer(trial, tpatch, reconnection)
    except ValueError:
        return _not_applicable(reconnection.classification)
    touched = tuple(int(v) for eid in patch.element_ids
                    for v in mesh.elements[eid, :mesh.dim + 1])
    return _finish(mesh, trial, patch.element_ids, npatch, configs,
                   reconnection.classification, require_improvement, before,
                   touched=tuple(sorted(set(touched))), commit=commit)


# ---------------------------------------------------------------------------
# flips / swaps

def _ring_vertices(mesh, edge, ring):
    """Cyclic vertex order around an edge's tet ring."""
    a, b = int(edge[0]), int(edge[1])
    corner = mesh.elements[:, :4]
    ws = []
    n = len(ring)
    for i in range(n):
        cur = set(int(v) for v in corner[ring[i]]) - {a, b}
        prv = set(int(v) for v in corner[ring[i - 1]]) - {a, b}
        ws.append((cur & prv).pop())
    return ws


def flip_candidates(mesh: HighOrderMesh, element_id: int,
                    topology: MeshTopology | None = None) -> list:
    """Topologically possible flips involving one element.

    2D: one 2->2 flip per interior edge.  3D: a 2->3 swap per interior
    face, a 3->2 swap per interior edge with shell size 3, and both 4->4
    reconnections for shell size 4.
    """
    topo = topology if topology is not None else MeshTopology(mesh)
    nv = mesh.dim + 1
    row = [int(v) for v in mesh.elements[element_id, :nv]]
    out = []
    if mesh.dim == 2:
        for (la, lb) in ((0, 1), (1, 2), (2, 0)):
            a, b = row[la], row[lb]
            f = (a, b) if a < b else (b, a)
            els = topo.incidence.get(f, [])
            if len(els) != 2:
                continue
            other = els[0] if els[1] == element_id else els[1]
            orow = [int(v) for v in mesh.elements[other, :3]]
            c = [v for v in row if v not in f][0]
            dv = [v for v in orow if v not in f][0]
            conns = (_orient(mesh.nodes, (c, dv, a), 2),
                     _orient(mesh.nodes, (dv, c, b), 2))
            out.append(Reconnection((element_id, other), conns, "flip2_2"))
        return out

    # 2 -> 3 swaps over interior faces
    for f in element_facets(row, 3):
        els = topo.incidence.get(f, [])
        if len(els) != 2:
            continue
        other = els[0] if els[1] == element_id else els[1]
        orow = [int(v) for v in mesh.elements[other, :4]]
        dv = [v for v in row if v not in f][0]
        ev = [v for v in orow if v not in f][0]
        fa, fb, fc = f
        conns = tuple(_orient(mesh.nodes, (dv, ev, x, y), 3)
                      for (x, y) in ((fa, fb), (fb, fc), (fc, fa)))
        out.append(Reconnection((element_id, other), conns, "swap2_3"))

    # 3 -> 2 and 4 -> 4 swaps over edges
    seen = set()
    for (la, lb) in ((0, 1), (1, 2), (2, 0), (0, 3), (1, 3), (2, 3)):
        a, b = row[la], row[lb]
        key = (a, b) if a < b else (b, a)
        if key in seen:
            continue
        seen.add(key)
        ring = shell_of_edge(mesh, key)
        if len(ring) == 3:
            w = _ring_vertices(mesh, key, ring)
            conns = (_orient(mesh.nodes, (w[0], w[1], w[2], key[1]), 3),
                     _orient(mesh.nodes, (w[0], w[2], w[1], key[0]), 3))
            out.append(Reconnection(tuple(ring), conns, "swap3_2"))
        elif len(ring) == 4:
            w = _ring_vertices(mesh, key, ring)
            for d0, d1, s0, s1 in ((0, 2, 1, 3), (1, 3, 2, 0)):
                conns = tuple(
                    _orient(mesh.nodes, c, 3) for c in (
                        (key[0], w[d0], w[s0], w[d1]),
                        (key[0], w[d0], w[d1], w[s1]),
                        (key[1], w[d0], w[d1], w[s0]),
                        (key[1], w[d0], w[s1], w[d1])))
                out.append(Reconnection(tuple(ring), conns, "swap4_4"))
    return out


# ---------------------------------------------------------------------------
# collapses

def _incident_partition(mesh, a, b):
    corner = mesh.elements[:, :mesh.dim + 1]
    has_a = (corner == a).any(axis=1)
    has_b = (corner == b).any(axis=1)
    dying = np.nonzero(has_a & has_b)[0]
    survivors = np.nonzero(has_a ^ has_b)[0]
    return dying, survivors


def _collapse_admissible(mesh, a, b, dying, survivors):
    """Post-merge duplicate elements or overshared facets make it invalid."""
    nv = mesh.dim + 1
    renamed = []
    for eid in survivors:
        conn = [(-1 if v in (a, b) else int(v))
                for v in mesh.elements[eid, :nv]]
        renamed.append(tuple(sorted(conn)))
    if len(set(renamed)) != len(renamed):
        return False
    fcount: dict = {}
    for conn in renamed:
        for f in element_facets(np.asarray(conn), mesh.dim):
            if -1 in f:
                fcount[f] = fcount.get(f, 0) + 1
    return all(c <= 2 for c in fcount.values())


def collapse_edge(mesh: HighOrderMesh, edge,
                  configs: OperationConfigs | None = None,
                  require_improvement: bool = False,
                  topology: MeshTopology | None = None) -> OperationResult:
    """Merge the edge endpoints at the curved-edge midpoint (t = 1/2).

    Interior edges need both endpoints interior; boundary edges need an
    analytic geometry descriptor covering every boundary facet touching
    either endpoint (the merged vertex is projected onto it).
    """
    configs = configs if configs is not None else OperationConfigs()
    topo = topology if topology is not None else MeshTopology(mesh)
    a, b = int(edge[0]), int(edge[1])
    dying, survivors = _incident_partition(mesh, a, b)
    if dying.size == 0:
        return _not_applicable("collapse")
    a_bnd = bool(topo.node_on_boundary[a])
    b_bnd = bool(topo.node_on_boundary[b])
    geo = None
    if a_bnd != b_bnd:
        return _not_applicable("collapse")
    if a_bnd and b_bnd:
        tags = [mesh.boundary_tags.get(f) for f in topo.boundary
                if a in f or b in f]
        geos = {mesh.geometry.get(t) for t in tags}
        if None in geos or len(geos) != 1:
            return _not_applicable("collapse")
        geo = geos.pop()
    if not _collapse_admissible(mesh, a, b, dying, survivors):
        return _not_applicable("collapse")

    patch_eids = np.concatenate([dying, survivors])
    from .mesh import make_patch, edge_point
    patch = make_patch(mesh, patch_eids, topo)
    before = _patch_agg(mesh, patch_eids, configs.distortion)

    pos = edge_point(mesh, (a, b), 0.5)
    if geo is not None:
        pos = geo.project(pos)

    trial = mesh.copy()
    tpatch = ElementPatch(mesh=trial, element_ids=tuple(int(e) for e in patch_eids),
                          free_nodes=patch.free_nodes,
                          frozen_nodes=patch.frozen_nodes)
    tr = _Transfer(trial, tpatch)
    mid = tr.add_node(pos, frozen=geo is not None)
    nv = mesh.dim + 1
    conns = []
    for eid in survivors:
        conn = tuple(mid if int(v) in (a, b) else int(v)
                     for v in mesh.elements[eid, :nv])
        conns.append(_orient_tr(tr, conn))
    rows = tr.build(conns)
    new_ids, npatch = tr.apply(tuple(int(e) for e in patch_eids), rows)

    def tag_edits(tm):
        tags = {}
        for f, t in tm.boundary_tags.items():
            if a in f and b in f:
                continue
            if a in f or b in f:
                nf = tuple(sorted(mid if v in (a, b) else v for v in f))
                tags[nf] = t
            else:
                tags[f] = t
        tm.boundary_tags = tags

    touched = tuple(sorted({int(v) for eid in patch_eids
                            for v in mesh.elements[eid, :nv]}))
    return _finish(mesh, trial, tuple(int(e) for e in patch_eids), npatch,
                   configs, "collapse", require_improvement, before,
                   touched=touched, tag_edits=tag_edits)


def _orient_tr(tr: _Transfer, conn):
    """Positive straight orientation with transfer-created vertex support."""
    def coord(i):
        return tr.mesh.nodes[i] if i < tr._base else tr.new_nodes[i - tr._base]
    v = np.asarray([coord(i) for i in conn])
    if np.linalg.det(v[1:] - v[:1]) < 0.0:
        conn = list(conn)
        conn[-1], conn[-2] = conn[-2], conn[-1]
        return tuple(conn)
    return tuple(conn)


# ---------------------------------------------------------------------------
# splits

_TET_LOCAL_EDGES = ((0, 1), (1, 2), (2, 0), (0, 3), (1, 3), (2, 3))


def _element_edge_keys(mesh, eid):
    nv = mesh.dim + 1
    row = [int(v) for v in mesh.elements[eid, :nv]]
    pairs = ((0, 1), (1, 2), (2, 0)) if mesh.dim == 2 else _TET_LOCAL_EDGES
    return [tuple(sorted((row[i], row[j]))) for (i, j) in pairs]


def _split_closure(mesh, marked: set) -> set:
    """Extend the marked edge set until every element fits a template."""
    marked = set(marked)
    edge_elems: dict = {}
    for eid in range(mesh.num_elements):
        for e in _element_edge_keys(mesh, eid):
            edge_elems.setdefault(e, []).append(eid)
    for e in marked:
        if e not in edge_elems:
            raise ValueError(f"{e} is not an edge of the mesh")
    changed = True
    while changed:
        changed = False
        affected = {eid for e in marked for eid in edge_elems.get(e, ())}
        for eid in affected:
            keys = _element_edge_keys(mesh, eid)
            m = [k for k in keys if k in marked]
            if mesh.dim == 2:
                if len(m) == 2:
                    marked.update(keys)
                    changed = True
            else:
                if len(m) in (1, 6):
                    continue
                if len(m) == 3 and len({v for k in m for v in k}) == 3:
                    continue
                marked.update(keys)
                changed = True
    return marked


def _template_children(mesh, eid, marked, mid):
    """Child vertex tuples for one element under its split template."""
    nv = mesh.dim + 1
    row = [int(v) for v in mesh.elements[eid, :nv]]
    keys = _element_edge_keys(mesh, eid)
    m = [k for k in keys if k in marked]
    if mesh.dim == 2:
        if len(m) == 1:
            (u, v) = m[0]
            w = [x for x in row if x not in m[0]][0]
            mm = mid[m[0]]
            return [(u, mm, w), (mm, v, w)], "split1_2"
        A, B, C = row
        mab, mbc, mca = (mid[tuple(sorted((A, B)))], mid[tuple(sorted((B, C)))],
                         mid[tuple(sorted((C, A)))])
        return [(A, mab, mca), (mab, B, mbc), (mca, mbc, C),
                (mab, mbc, mca)], "split1_4"
    if len(m) == 1:
        (u, v) = m[0]
        rest = [x for x in row if x not in m[0]]
        mm = mid[m[0]]
        return [(u, mm, rest[0], rest[1]), (mm, v, rest[0], rest[1])], "split1_2"
    if len(m) == 3:
        face = sorted({v for k in m for v in k})
        apex = [x for x in row if x not in face][0]
        i, j, k = face
        mij = mid[tuple(sorted((i, j)))]
        mjk = mid[tuple(sorted((j, k)))]
        mik = mid[tuple(sorted((i, k)))]
        return [(i, mij, mik, apex), (mij, j, mjk, apex),
                (mik, mjk, k, apex), (mij, mjk, mik, apex)], "split1_4"
    v0, v1, v2, v3 = row

    def md(i, j):
        return mid[tuple(sorted((row[i], row[j])))]

    m01, m02, m03 = md(0, 1), md(0, 2), md(0, 3)
    m12, m13, m23 = md(1, 2), md(1, 3), md(2, 3)
    return [(v0, m01, m02, m03), (m01, v1, m12, m13),
            (m02, m12, v2, m23), (m03, m13, m23, v3),
            (m01, m02, m03, m13), (m01, m02, m12, m13),
            (m02, m03, m13, m23), (m02, m12, m13, m23)], "split1_8"


def _boundary_face_children(face, marked, mid):
    """Child facets of a split 3D boundary face (1 or 3 marked edges)."""
    a, b, c = face
    fm = [e for e in (tuple(sorted((a, b))), tuple(sorted((b, c))),
                      tuple(sorted((a, c)))) if e in marked]
    if not fm:
        return [face]
    if len(fm) == 1:
        (u, v) = fm[0]
        w = [x for x in face if x not in fm[0]][0]
        mm = mid[fm[0]]
        return [(u, mm, w), (mm, v, w)]
    mab = mid[tuple(sorted((a, b)))]
    mbc = mid[tuple(sorted((b, c)))]
    mca = mid[tuple(sorted((a, c)))]
    return [(a, mab, mca), (mab, b, mbc), (mca, mbc, c), (mab, mbc, mca)]


def split_elements(mesh: HighOrderMesh, marked_edges,
                   configs: OperationConfigs | None = None,
                   require_improvement: bool = False,
                   topology: MeshTopology | None = None) -> OperationResult:
    """Subdivide elements on marked edges with conformity closure.

    Mid-edge vertices sit at curved-edge midpoints (t = 1/2); nodes on
    split domain-boundary facets sample the original curved facet so the
    domain geometry is preserved; everything else starts straight-sided
    and is untangled/smoothed.
    """
    configs = configs if configs is not None else OperationConfigs()
    topo = topology if topology is not None else MeshTopology(mesh)
    if not marked_edges:
        raise ValueError("no edges marked for splitting")
    marked = _split_closure(
        mesh, {tuple(sorted((int(a), int(b)))) for (a, b) in marked_edges})
    affected = sorted({eid for eid in range(mesh.num_elements)
                       if any(k in marked for k in _element_edge_keys(mesh, eid))})
    from .mesh import make_patch, edge_point
    patch = make_patch(mesh, affected, topo)
    before = _patch_agg(mesh, affected, configs.distortion)

    trial = mesh.copy()
    tpatch = ElementPatch(mesh=trial, element_ids=tuple(affected),
                          free_nodes=patch.free_nodes,
                          frozen_nodes=patch.frozen_nodes)
    tr = _Transfer(trial, tpatch)

    bnd_set = set(topo.boundary)
    if mesh.dim == 3:
        bnd_edges = {tuple(sorted(p)) for f in topo.boundary
                     for p in ((f[0], f[1]), (f[1], f[2]), (f[0], f[2]))}
    else:
        bnd_edges = bnd_set

    mid = {}
    for e in sorted(marked):
        pos = edge_point(mesh, e, 0.5)
        on_bnd = e in bnd_edges
        geo = None
        if on_bnd:
            geo = _edge_geometry(mesh, topo, e)
            if geo is not None:
                pos = geo.project(pos)
        mid[e] = tr.add_node(pos, frozen=on_bnd)

    _seed_boundary_subfacets(mesh, trial, tr, topo, affected, marked, mid)

    conns = []
    for eid in affected:
        children, _ = _template_children(mesh, eid, marked, mid)
        for c in children:
            conns.append(_orient_tr(tr, c))
    rows = tr.build(conns)
    new_ids, npatch = tr.apply(tuple(affected), rows)

    def tag_edits(tm):
        tags = dict(tm.boundary_tags)
        for eid in affected:
            for f in element_facets(mesh.elements[eid, :mesh.dim + 1], mesh.dim):
                t = tags.get(f)
                if t is None:
                    continue
                if mesh.dim == 2:
                    kids = ([f] if f not in marked else
                            [tuple(sorted((f[0], mid[f]))),
                             tuple(sorted((mid[f], f[1])))])
                else:
                    kids = [tuple(sorted(k))
                            for k in _boundary_face_children(f, marked, mid)]
                if kids != [f]:
                    del tags[f]
                    for k in kids:
                        tags[k] = t
        tm.boundary_tags = tags

    nv = mesh.dim + 1
    touched = tuple(sorted({int(v) for eid in affected
                            for v in mesh.elements[eid, :nv]}))
    return _finish(mesh, trial, tuple(affected), npatch, configs,
                   "split", require_improvement, before,
                   touched=touched, tag_edits=tag_edits)


def _edge_geometry(mesh, topo, e):
    """Geometry descriptor of the boundary facets containing edge e."""
    if mesh.dim == 2:
        return mesh.geometry.get(mesh.boundary_tags.get(e))
    for f in topo.boundary:
        if e[0] in f and e[1] in f:
            geo = mesh.geometry.get(mesh.boundary_tags.get(f))
            if geo is not None:
                return geo
    return None


def _seed_boundary_subfacets(mesh, trial, tr, topo, affected, marked, mid):
    """Pre-place nodes of split domain-boundary facets on the parent curve."""
    master = mesh.master
    p = mesh.degree
    nv = mesh.dim + 1
    done = set()
    for eid in affected:
        row = mesh.elements[eid]
        corners = [int(v) for v in row[:nv]]
        for f in element_facets(row[:nv], mesh.dim):
            if f not in topo._boundary_set or f in done:
                continue
            if mesh.dim == 2:
                if f not in marked:
                    continue
                done.add(f)
                ids = edge_curve_nodes(mesh, f)
                coords = mesh.nodes[ids]
                geo = mesh.geometry.get(mesh.boundary_tags.get(f))
                for half, (ua, ub) in enumerate(((f[0], mid[f]), (mid[f], f[1]))):
                    for k in range(1, p):
                        t = 0.5 * half + 0.5 * k / p
                        vals, _ = line_shape(p, np.array([t]))
                        pos = vals[0] @ coords
                        if geo is not None:
                            pos = geo.project(pos)
                        tr.seed((ua, ub), (p - k, k), pos, frozen=True)
                continue
            edges2 = [tuple(sorted(pp)) for pp in
                      ((f[0], f[1]), (f[1], f[2]), (f[0], f[2]))]
            if not any(e in marked for e in edges2):
                continue
            done.add(f)
            geo = mesh.geometry.get(mesh.boundary_tags.get(f))
            loc = {g: i for i, g in enumerate(corners)}
            refv = np.vstack([np.zeros(3), np.eye(3)])
            pb = {v: refv[loc[v]] for v in f}
            for e in edges2:
                if e in marked:
                    pb[mid[e]] = 0.5 * (pb[e[0]] + pb[e[1]])
            for kid in _boundary_face_children(f, marked, mid):
                kv = np.array([pb[v] for v in kid])   # parent ref coords
                # seed every lattice node of the child facet
                for wa in range(0, p + 1):
                    for wb in range(0, p + 1 - wa):
                        wc = p - wa - wb
                        w = (wa, wb, wc)
                        nz = [i for i, x in enumerate(w) if x > 0]
                        if len(nz) == 1:
                            continue        # vertices carried by ids
                        ent_ids = tuple(kid[i] for i in nz)
                        ent_w = tuple(w[i] for i in nz)
                        refpt = (np.array(w, dtype=float) / p) @ kv
                        vals, _ = master.shape(refpt)
                        pos = vals @ mesh.nodes[row]
                        if geo is not None:
                            pos = geo.project(pos)
                        tr.seed(ent_ids, ent_w, pos, frozen=True)
