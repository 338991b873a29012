"""Curved simplex mesh representation and topology queries.

A mesh stores node coordinates, element connectivity in canonical node
order (see master.py), boundary facet tags and optional analytic geometry
descriptors bound to tags.  Facets are edges in 2D and triangular faces in
3D, always keyed by their sorted corner vertex ids.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .master import MasterElement, build_master_element, edge_slots, simplex_node_count


class MeshIntegrityError(Exception):
    """Raised when a query requires a conforming mesh and it is not."""


@dataclass(frozen=True)
class Circle:
    center: tuple
    radius: float

    def project(self, points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        c = np.asarray(self.center, dtype=float)
        v = pts - c
        r = np.linalg.norm(v, axis=1, keepdims=True)
        r[r == 0.0] = 1.0
        out = c + v / r * self.radius
        return out if np.asarray(points).ndim > 1 else out[0]

    def distance(self, points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        c = np.asarray(self.center, dtype=float)
        return np.abs(np.linalg.norm(pts - c, axis=1) - self.radius)


class Sphere(Circle):
    pass


@dataclass
class HighOrderMesh:
    """Curved simplex mesh of uniform polynomial degree."""

    dim: int
    degree: int
    nodes: np.ndarray            # (N, dim) float
    elements: np.ndarray         # (E, K) int, canonical node order
    boundary_tags: dict = field(default_factory=dict)   # facet tuple -> int
    geometry: dict = field(default_factory=dict)        # tag -> Circle/Sphere

    def __post_init__(self):
        self.nodes = np.ascontiguousarray(np.asarray(self.nodes, dtype=float))
        self.elements = np.ascontiguousarray(np.asarray(self.elements, dtype=np.int64))
        if self.elements.ndim != 2 and self.elements.size:
            raise ValueError("elements must be a 2D id array")
        K = simplex_node_count(self.dim, self.degree)
        if self.elements.size and self.elements.shape[1] != K:
            raise ValueError(
                f"elements have {self.elements.shape[1]} nodes, expected {K} "
                f"for degree {self.degree} in {self.dim}D")

    @property
    def num_nodes(self) -> int:
        return self.nodes.shape[0]

    @property
    def num_elements(self) -> int:
        return self.elements.shape[0]

    @property
    def master(self) -> MasterElement:
        return build_master_element(self.dim, self.degree)

    def copy(self) -> "HighOrderMesh":
        return HighOrderMesh(self.dim, self.degree, self.nodes.copy(),
                             self.elements.copy(), dict(self.boundary_tags),
                             dict(self.geometry))

    def vertex_ids(self) -> np.ndarray:
        """Ids of corner nodes, ascending."""
        return np.unique(self.elements[:, :self.dim + 1])


@dataclass(frozen=True)
class ElementPatch:
    """Unit of smoothing: elements with frozen rim and free interior nodes."""

    mesh: HighOrderMesh
    element_ids: tuple
    free_nodes: np.ndarray
    frozen_nodes: np.ndarray


@dataclass(frozen=True)
class MeshEdge:
    verts: tuple          # sorted vertex pair
    elements: tuple       # incident element ids
    boundary: bool


@dataclass(frozen=True)
class Violation:
    kind: str
    entities: tuple


@dataclass(frozen=True)
class ConformityReport:
    ok: bool
    violations: tuple


def element_facets(verts, dim):
    """Sorted corner tuples of the d-1 facets of one element."""
    if dim == 2:
        a, b, c = verts[0], verts[1], verts[2]
        return (tuple(sorted((a, b))), tuple(sorted((b, c))), tuple(sorted((c, a))))
    a, b, c, d = verts[0], verts[1], verts[2], verts[3]
    return (tuple(sorted((a, b, c))), tuple(sorted((a, b, d))),
            tuple(sorted((a, c, d))), tuple(sorted((b, c, d))))


def facet_incidence(mesh: HighOrderMesh) -> dict:
    """Map facet -> list of incident element ids."""
    inc: dict = {}
    nv = mesh.dim + 1
    for eid, row in enumerate(mesh.elements[:, :nv]):
        for f in element_facets(row, mesh.dim):
            inc.setdefault(f, []).append(eid)
    return inc


def boundary_facets(mesh: HighOrderMesh, incidence: dict | None = None) -> list:
    inc = incidence if incidence is not None else facet_incidence(mesh)
    return [f for f, els in inc.items() if len(els) == 1]


def _facet_slot_table(master: MasterElement) -> dict:
    """Local facet (sorted local verts) -> element slots lying on it."""
    table: dict = {}
    dim = master.dim
    if dim == 2:
        facets = [(0, 1), (1, 2), (0, 2)]
    else:
        facets = [tuple(sorted(f)) for f, _ in master.faces]
    for f in facets:
        fs = set(f)
        slots = [s for s in range(master.num_nodes)
                 if set(master.node_entity[s]) <= fs]
        table[tuple(sorted(f))] = tuple(slots)
    return table


class MeshTopology:
    """Per-state adjacency caches; rebuild after any mutation."""

    def __init__(self, mesh: HighOrderMesh):
        self.mesh = mesh
        nv = mesh.dim + 1
        self.incidence = facet_incidence(mesh)
        self.boundary = [f for f, els in self.incidence.items() if len(els) == 1]
        over = [f for f, els in self.incidence.items() if len(els) > 2]
        if over:
            raise MeshIntegrityError(f"facets shared by >2 elements: {over[:5]}")
        self.node_use_count = np.bincount(
            mesh.elements.ravel(), minlength=mesh.num_nodes)
        self.node_on_boundary = np.zeros(mesh.num_nodes, dtype=bool)
        slot_table = _facet_slot_table(mesh.master)
        corner = mesh.elements[:, :nv]
        bset = set(self.boundary)
        for f in self.boundary:
            eid = self.incidence[f][0]
            row = mesh.elements[eid]
            gl = {int(g): i for i, g in enumerate(corner[eid])}
            lf = tuple(sorted(gl[g] for g in f))
            self.node_on_boundary[row[list(slot_table[lf])]] = True
        self.vertex_elements: dict = {}
        for eid, row in enumerate(corner):
            for v in row:
                self.vertex_elements.setdefault(int(v), []).append(eid)
        self._boundary_set = bset

    def is_boundary_facet(self, f) -> bool:
        return f in self._boundary_set


def make_patch(mesh: HighOrderMesh, element_ids,
               topology: MeshTopology | None = None) -> ElementPatch:
    """Patch over the given elements; frozen nodes are those shared with
    outside elements or lying on the domain boundary."""
    topo = topology if topology is not None else MeshTopology(mesh)
    element_ids = tuple(int(e) for e in element_ids)
    rows = mesh.elements[list(element_ids)]
    patch_nodes = np.unique(rows)
    inside = np.bincount(rows.ravel(), minlength=mesh.num_nodes)
    shared_out = topo.node_use_count[patch_nodes] > inside[patch_nodes]
    on_bnd = topo.node_on_boundary[patch_nodes]
    frozen_mask = shared_out | on_bnd
    return ElementPatch(mesh=mesh, element_ids=element_ids,
                        free_nodes=patch_nodes[~frozen_mask],
                        frozen_nodes=patch_nodes[frozen_mask])


def patch_around_vertex(mesh: HighOrderMesh, vertex_id: int,
                        topology: MeshTopology | None = None) -> ElementPatch:
    """All elements incident to a corner vertex, rim frozen.

    Boundary vertices stay frozen: domain boundary nodes do not move.
    """
    topo = topology if topology is not None else MeshTopology(mesh)
    if not (0 <= vertex_id < mesh.num_nodes):
        raise ValueError(f"vertex id {vertex_id} out of range")
    eids = topo.vertex_elements.get(int(vertex_id))
    if not eids:
        raise ValueError(f"node {vertex_id} is not a corner vertex")
    return make_patch(mesh, eids, topo)


def edge_list(mesh: HighOrderMesh) -> list:
    """Unique vertex-pair edges with incident elements and boundary flags."""
    nv = mesh.dim + 1
    inc: dict = {}
    for eid, row in enumerate(mesh.elements[:, :nv]):
        vs = [int(v) for v in row]
        if mesh.dim == 2:
            pairs = ((vs[0], vs[1]), (vs[1], vs[2]), (vs[2], vs[0]))
        else:
            pairs = ((vs[0], vs[1]), (vs[1], vs[2]), (vs[2], vs[0]),
                     (vs[0], vs[3]), (vs[1], vs[3]), (vs[2], vs[3]))
        for a, b in pairs:
            key = (a, b) if a < b else (b, a)
            inc.setdefault(key, []).append(eid)

    if mesh.dim == 2:
        bad = [e for e, els in inc.items() if len(els) > 2]
        if bad:
            raise MeshIntegrityError(f"edges shared by >2 elements: {bad[:5]}")
        return [MeshEdge(e, tuple(els), len(els) == 1)
                for e, els in inc.items()]

    finc = facet_incidence(mesh)
    bad = [f for f, els in finc.items() if len(els) > 2]
    if bad:
        raise MeshIntegrityError(f"faces shared by >2 elements: {bad[:5]}")
    bedges = set()
    for f, els in finc.items():
        if len(els) == 1:
            a, b, c = f
            bedges.update([(a, b), (a, c), (b, c)])
    return [MeshEdge(e, tuple(els), e in bedges) for e, els in inc.items()]


def edge_curve_nodes(mesh: HighOrderMesh, edge) -> np.ndarray:
    """Node ids along the curved edge (a, b): a, interior nodes, b."""
    a, b = int(edge[0]), int(edge[1])
    nv = mesh.dim + 1
    for row in mesh.elements:
        corners = row[:nv]
        la = lb = -1
        for i, g in enumerate(corners):
            if g == a:
                la = i
            elif g == b:
                lb = i
        if la < 0 or lb < 0:
            continue
        if mesh.dim == 3:
            # corners must share an element edge; any two corners of a tet do
            pass
        slots = edge_slots(mesh.master, la, lb)
        return row[list(slots)]
    raise ValueError(f"edge {edge} not found in mesh")


def edge_point(mesh: HighOrderMesh, edge, t: float) -> np.ndarray:
    """Point on the degree-p edge curve at reference parameter t in [0,1]."""
    from .master import line_shape
    ids = edge_curve_nodes(mesh, edge)
    vals, _ = line_shape(mesh.degree, np.array([t]))
    return vals[0] @ mesh.nodes[ids]


def curved_edge_length(mesh: HighOrderMesh, edge, npts: int | None = None) -> float:
    """Arc length of the degree-p edge curve by Gauss quadrature."""
    ids = edge_curve_nodes(mesh, edge)
    return float(curve_length(mesh.nodes[ids], npts))


def curve_length(coords: np.ndarray, npts: int | None = None) -> float:
    """Arc length of one polynomial curve given its p+1 control nodes."""
    from .master import line_shape
    from .quadrature import line_rule
    p = coords.shape[0] - 1
    n = npts if npts is not None else max(10, p + 3)
    t, w = line_rule(n)
    _, ders = line_shape(p, t)
    tang = ders @ coords
    return float(np.sum(w * np.linalg.norm(tang, axis=1)))


def curved_edge_lengths(mesh: HighOrderMesh, edges, npts: int | None = None) -> np.ndarray:
    """Vectorized arc lengths for a list of vertex-pair edges."""
    from .master import line_shape
    from .quadrature import line_rule
    p = mesh.degree
    pairs = [e.verts if isinstance(e, MeshEdge) else tuple(e) for e in edges]
    need = {tuple(sorted((int(a), int(b)))): i for i, (a, b) in enumerate(pairs)}
    idtab = np.full((len(need), p + 1), -1, dtype=np.int64)
    nv = mesh.dim + 1
    master = mesh.master
    local_edges = [e for e, _ in master.edges]
    for row in mesh.elements:
        for (la, lb) in local_edges:
            a, b = int(row[la]), int(row[lb])
            key = (a, b) if a < b else (b, a)
            j = need.get(key)
            if j is None or idtab[j, 0] >= 0:
                continue
            lo, hi = (la, lb) if a < b else (lb, la)
            idtab[j] = row[list(edge_slots(master, lo, hi))]
        if np.all(idtab[:, 0] >= 0):
            break
    missing = np.nonzero(idtab[:, 0] < 0)[0]
    if missing.size:
        raise ValueError("edges not found in mesh")
    n = npts if npts is not None else max(10, p + 3)
    t, w = line_rule(n)
    _, ders = line_shape(p, t)          # (n, p+1)
    coords = mesh.nodes[idtab]          # (ne, p+1, d)
    tang = np.einsum("qk,ekd->eqd", ders, coords)
    return np.einsum("q,eq->e", w, np.linalg.norm(tang, axis=2))


def element_jacobian(mesh: HighOrderMesh, element_id: int,
                     master: MasterElement, point) -> np.ndarray:
    """Jacobian of the master-to-physical map at one reference point."""
    if master.dim != mesh.dim or master.degree != mesh.degree:
        raise ValueError("master element does not match mesh dim/degree")
    row = mesh.elements[element_id]
    _, grads = master.shape(np.asarray(point, dtype=float))
    return mesh.nodes[row].T @ grads


def shell_of_edge(mesh: HighOrderMesh, edge) -> list:
    """Cyclically ordered ring of tets around an interior edge.

    Returns [] for boundary edges or open shells (not flippable here).
    """
    if mesh.dim != 3:
        raise ValueError("edge shells are a 3D query")
    a, b = int(edge[0]), int(edge[1])
    corner = mesh.elements[:, :4]
    incident = [eid for eid, row in enumerate(corner)
                if a in row and b in row]
    if len(incident) < 2:
        return []
    # side faces (a, b, w) -> the one or two ring tets using them
    side: dict = {}
    others: dict = {}
    for eid in incident:
        ws = [int(v) for v in corner[eid] if v != a and v != b]
        others[eid] = ws
        for w in ws:
            side.setdefault(w, []).append(eid)
    if any(len(v) != 2 for v in side.values()):
        return []          # boundary edge: some side face has one tet
    start = incident[0]
    ring = [start]
    prev_w = others[start][0]
    cur = start
    while True:
        w_next = others[cur][1] if others[cur][0] == prev_w else others[cur][0]
        nxt = [e for e in side[w_next] if e != cur][0]
        if nxt == start:
            break
        ring.append(nxt)
        prev_w = w_next
        cur = nxt
        if len(ring) > len(incident):
            return []
    return ring if len(ring) == len(incident) else []


def canonical_node_key(gids, weights):
    """Orientation-independent key of a lattice node on a sub-simplex."""
    order = sorted(range(len(gids)), key=lambda i: gids[i])
    return (tuple(gids[i] for i in order), tuple(weights[i] for i in order))


def _facet_node_keys(mesh: HighOrderMesh, eid: int):
    """Canonical (facet-vertices, weights) keys for shareable nodes."""
    master = mesh.master
    row = mesh.elements[eid]
    out = []
    for s in range(master.num_nodes):
        kind = master.node_kind[s]
        if kind == "interior":
            continue
        ent = master.node_entity[s]
        gids = tuple(int(row[v]) for v in ent)
        w = tuple(int(master.lattice[s][v]) for v in ent)
        out.append((canonical_node_key(gids, w), int(row[s])))
    return out


def validate_conformity(mesh: HighOrderMesh) -> ConformityReport:
    """Check the mesh invariants; returns all violations found."""
    violations = []
    N = mesh.num_nodes
    if mesh.elements.size and (mesh.elements.min() < 0 or mesh.elements.max() >= N):
        bad = np.nonzero((mesh.elements < 0) | (mesh.elements >= N))
        violations.append(Violation("node_id_out_of_range",
                                    tuple(np.unique(bad[0])[:10].tolist())))
        return ConformityReport(False, tuple(violations))

    inc = facet_incidence(mesh)
    for f, els in inc.items():
        if len(els) > 2:
            violations.append(Violation("facet_overshared", (f, tuple(els))))

    # matching high-order node ids on shared facets
    seen: dict = {}
    for eid in range(mesh.num_elements):
        for key, nid in _facet_node_keys(mesh, eid):
            prev = seen.setdefault(key, nid)
            if prev != nid:
                violations.append(Violation(
                    "facet_node_mismatch", (key[0], prev, nid)))

    # hanging vertices: a corner vertex sitting on a foreign incidence-1 facet
    bnd = [f for f, els in inc.items() if len(els) == 1]
    if bnd:
        verts = mesh.vertex_ids()
        vxy = mesh.nodes[verts]
        from .master import line_shape
        samples = np.linspace(0.0, 1.0, 8 * mesh.degree + 1)
        vals, _ = line_shape(mesh.degree, samples)
        for f in bnd:
            h = np.linalg.norm(mesh.nodes[f[-1]] - mesh.nodes[f[0]])
            tol = 1e-7 * max(h, 1e-30)
            if mesh.dim == 2:
                ids = edge_curve_nodes(mesh, f)
                pts = vals @ mesh.nodes[ids]
                d = _point_polyline_dist(vxy, pts)
            else:
                d = _point_triangle_dist(vxy, mesh.nodes[list(f)])
            for v in verts[d < tol]:
                if int(v) not in f:
                    violations.append(Violation("hanging_node", (int(v), f)))
    return ConformityReport(len(violations) == 0, tuple(violations))


def _point_polyline_dist(points: np.ndarray, poly: np.ndarray) -> np.ndarray:
    """Distance from points to a sampled curve, endpoints excluded."""
    a = poly[:-1]
    ab = poly[1:] - a                               # (S, d)
    w = points[:, None, :] - a[None, :, :]          # (V, S, d)
    denom = np.maximum((ab * ab).sum(-1), 1e-300)
    t = np.clip((w * ab[None, :, :]).sum(-1) / denom, 0.0, 1.0)
    proj = a[None, :, :] + t[:, :, None] * ab[None, :, :]
    return np.linalg.norm(points[:, None, :] - proj, axis=2).min(axis=1)


def _point_triangle_dist(points: np.ndarray, tri: np.ndarray) -> np.ndarray:
    """Distance from points to a triangle, large when outside its hull."""
    a, b, c = tri
    u, v = b - a, c - a
    n = np.cross(u, v)
    nn = np.dot(n, n)
    if nn == 0.0:
        return np.full(points.shape[0], np.inf)
    w = points - a
    dist = np.abs(w @ n) / np.sqrt(nn)
    # barycentric inside test on the projection
    uu, vv, uv = u @ u, v @ v, u @ v
    wu, wv = w @ u, w @ v
    det = uu * vv - uv * uv
    s = (vv * wu - uv * wv) / det
    t = (uu * wv - uv * wu) / det
    inside = (s > 1e-9) & (t > 1e-9) & (s + t < 1 - 1e-9)
    out = np.where(inside, dist, np.inf)
    return out


def straight_volumes(mesh: HighOrderMesh, element_ids=None) -> np.ndarray:
    """Signed straight-sided (vertex hull) measures of elements."""
    nv = mesh.dim + 1
    eids = (np.arange(mesh.num_elements) if element_ids is None
            else np.asarray(element_ids, dtype=int))
    verts = mesh.nodes[mesh.elements[eids][:, :nv]]     # (E, nv, d)
    v = verts[:, 1:, :] - verts[:, :1, :]
    if mesh.dim == 2:
        det = v[:, 0, 0] * v[:, 1, 1] - v[:, 0, 1] * v[:, 1, 0]
        return det / 2.0
    return np.linalg.det(v) / 6.0
