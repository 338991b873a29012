"""Builtin mesh fixtures: small unit meshes and desk-scale domains.

All generators are deterministic.  The domain fixtures (circle-in-square,
circle-in-rectangle, fine circle-hole, sphere-in-cube, sphere-in-prism)
carry analytic geometry descriptors on their curved boundaries and ship
with high-order nodes projected onto them.
"""

from __future__ import annotations

import numpy as np

from .master import build_master_element
from .mesh import (Circle, HighOrderMesh, MeshTopology, Sphere,
                   canonical_node_key, facet_incidence)

CIRCLE_TAG = 1
OUTER_TAG = 2


def elevate_to_degree(dim: int, degree: int, vertices, cells,
                      boundary_tags: dict | None = None,
                      geometry: dict | None = None) -> HighOrderMesh:
    """High-order mesh from straight vertex connectivity.

    Extra Lagrange nodes are placed by the affine vertex map of each cell;
    nodes on shared facets are created once.
    """
    vertices = np.asarray(vertices, dtype=float)
    cells = np.asarray(cells, dtype=np.int64)
    master = build_master_element(dim, degree)
    K = master.num_nodes
    nv = dim + 1
    nodes = [vertices[i] for i in range(vertices.shape[0])]
    registry: dict = {}
    elems = np.empty((cells.shape[0], K), dtype=np.int64)
    lat = master.lattice.astype(float) / degree
    for e, cell in enumerate(cells):
        cell_xy = vertices[cell]
        for s in range(K):
            kind = master.node_kind[s]
            if kind == "vertex":
                elems[e, s] = cell[master.node_entity[s][0]]
                continue
            pos = lat[s] @ cell_xy
            if kind == "interior":
                nodes.append(pos)
                elems[e, s] = len(nodes) - 1
                continue
            ent = master.node_entity[s]
            gids = tuple(int(cell[v]) for v in ent)
            w = tuple(int(master.lattice[s][v]) for v in ent)
            key = canonical_node_key(gids, w)
            nid = registry.get(key)
            if nid is None:
                nodes.append(pos)
                nid = len(nodes) - 1
                registry[key] = nid
            elems[e, s] = nid
    return HighOrderMesh(dim, degree, np.array(nodes), elems,
                         dict(boundary_tags or {}), dict(geometry or {}))


def project_boundary_to_geometry(mesh: HighOrderMesh) -> None:
    """Snap all nodes of geometry-tagged boundary facets onto the geometry."""
    if not mesh.geometry:
        return
    from .mesh import _facet_slot_table
    slot_table = _facet_slot_table(mesh.master)
    inc = facet_incidence(mesh)
    nv = mesh.dim + 1
    for f, tag in mesh.boundary_tags.items():
        geo = mesh.geometry.get(tag)
        if geo is None or f not in inc or len(inc[f]) != 1:
            continue
        eid = inc[f][0]
        row = mesh.elements[eid]
        gl = {int(g): i for i, g in enumerate(row[:nv])}
        lf = tuple(sorted(gl[g] for g in f))
        ids = row[list(slot_table[lf])]
        mesh.nodes[ids] = geo.project(mesh.nodes[ids])


# ---------------------------------------------------------------------------
# unit fixtures

def single_triangle(degree: int = 1, vertices=None) -> HighOrderMesh:
    v = vertices if vertices is not None else [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]
    return elevate_to_degree(2, degree, v, [[0, 1, 2]])


def two_triangles(degree: int = 1, vertices=None) -> HighOrderMesh:
    """Unit square split along the diagonal (0,0)-(1,1)."""
    v = vertices if vertices is not None else \
        [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]]
    return elevate_to_degree(2, degree, v, [[0, 1, 2], [0, 2, 3]])


def vertex_fan(n: int = 6, degree: int = 1, radius: float = 1.0) -> HighOrderMesh:
    """n triangles around a center vertex (regular polygon rim)."""
    ang = 2.0 * np.pi * np.arange(n) / n
    verts = [[0.0, 0.0]] + [[radius * np.cos(a), radius * np.sin(a)] for a in ang]
    cells = [[0, 1 + i, 1 + (i + 1) % n] for i in range(n)]
    return elevate_to_degree(2, degree, verts, cells)


def single_tet(degree: int = 1, vertices=None) -> HighOrderMesh:
    v = vertices if vertices is not None else \
        [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]
    return elevate_to_degree(3, degree, v, [[0, 1, 2, 3]])


def two_tets(degree: int = 1) -> HighOrderMesh:
    """Two tets sharing the face (0,1,2)."""
    v = [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0],
         [0.3, 0.3, 1.0], [0.3, 0.3, -1.0]]
    return elevate_to_degree(3, degree, v, [[0, 1, 2, 3], [0, 2, 1, 4]])


def octahedron_star(degree: int = 1) -> HighOrderMesh:
    """8 tets around an interior center vertex (regular octahedron hull)."""
    v = [[0.0, 0.0, 0.0],
         [1.0, 0.0, 0.0], [-1.0, 0.0, 0.0],
         [0.0, 1.0, 0.0], [0.0, -1.0, 0.0],
         [0.0, 0.0, 1.0], [0.0, 0.0, -1.0]]
    faces = [(1, 3, 5), (3, 2, 5), (2, 4, 5), (4, 1, 5),
             (3, 1, 6), (2, 3, 6), (4, 2, 6), (1, 4, 6)]
    cells = [[0, a, b, c] for (a, b, c) in faces]
    return elevate_to_degree(3, degree, v, cells)


def tet_ring(n: int, degree: int = 1) -> HighOrderMesh:
    """n tets around the interior edge (0,1) on the z axis."""
    ang = 2.0 * np.pi * np.arange(n) / n
    v = [[0.0, 0.0, 1.0], [0.0, 0.0, -1.0]]
    v += [[np.cos(a), np.sin(a), 0.0] for a in ang]
    cells = []
    varr = np.asarray(v)
    for i in range(n):
        cell = [0, 1, 2 + i, 2 + (i + 1) % n]
        if np.linalg.det(varr[cell][1:] - varr[cell][0]) < 0:
            cell = [1, 0, 2 + i, 2 + (i + 1) % n]
        cells.append(cell)
    return elevate_to_degree(3, degree, v, cells)


# ---------------------------------------------------------------------------
# desk-scale domain fixtures

def circle_in_square(degree: int = 4, h: float = 0.22, radius: float = 0.5,
                     smooth: bool = True) -> HighOrderMesh:
    """[-1,1]^2 with a circular hole of the given radius at the origin."""
    return _grid_hole_mesh(degree, (-1.0, 1.0), (-1.0, 1.0), h,
                           Circle((0.0, 0.0), radius), smooth)


def _tag_boundaries_2d(mesh: HighOrderMesh, circle: Circle) -> None:
    inc = facet_incidence(mesh)
    tags = {}
    for f, els in inc.items():
        if len(els) != 1:
            continue
        mid = mesh.nodes[list(f)].mean(axis=0)
        if circle.distance(mid[None])[0] < 0.25 * circle.radius:
            tags[f] = CIRCLE_TAG
        else:
            tags[f] = OUTER_TAG
    mesh.boundary_tags = tags
    mesh.geometry = {CIRCLE_TAG: circle}


def _grid_hole_mesh(degree: int, xlim, ylim, h: float, circle: Circle,
                    smooth: bool = True) -> HighOrderMesh:
    """Delaunay mesh of a rectangle with a circular hole.

    Points are a cartesian grid (cleared near the circle) plus rings on and
    around the circle; triangles with centroids inside the hole are dropped.
    """
    from scipy.spatial import Delaunay
    cx, cy = circle.center
    r = circle.radius
    nring = max(8, int(round(2.0 * np.pi * r / h)))
    pts = []
    ang = 2.0 * np.pi * np.arange(nring) / nring
    pts += [[cx + r * np.cos(a), cy + r * np.sin(a)] for a in ang]
    ang2 = ang + np.pi / nring
    pts += [[cx + (r + 0.95 * h) * np.cos(a), cy + (r + 0.95 * h) * np.sin(a)]
            for a in ang2]
    nx = int(round((xlim[1] - xlim[0]) / h))
    ny = int(round((ylim[1] - ylim[0]) / h))
    xs = np.linspace(xlim[0], xlim[1], nx + 1)
    ys = np.linspace(ylim[0], ylim[1], ny + 1)
    for x in xs:
        for y in ys:
            dist = np.hypot(x - cx, y - cy)
            if dist < r + 1.55 * h:
                continue
            pts.append([x, y])
    pts = np.array(pts)
    tri = Delaunay(pts)
    cells = []
    for simplex in tri.simplices:
        cen = pts[simplex].mean(axis=0)
        if np.hypot(cen[0] - cx, cen[1] - cy) < r:
            continue
        a, b, c = pts[simplex]
        area = 0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]))
        cells.append(simplex if area > 0 else simplex[[0, 2, 1]])
    mesh = elevate_to_degree(2, degree, pts, np.array(cells))
    _tag_boundaries_2d(mesh, circle)
    project_boundary_to_geometry(mesh)
    if smooth and degree > 1:
        from .smoothing import smooth_mesh
        smooth_mesh(mesh)
    return mesh


def circle_in_rectangle(degree: int = 4, h: float = 0.22,
                        smooth: bool = True) -> HighOrderMesh:
    """Rectangle [-2,2]x[-1,1] with a circular hole of radius 0.5 at (-1,0)."""
    return _grid_hole_mesh(degree, (-2.0, 2.0), (-1.0, 1.0), h,
                           Circle((-1.0, 0.0), 0.5), smooth)


def fine_circle_hole(degree: int = 4, h: float = 0.055,
                     smooth: bool = True) -> HighOrderMesh:
    """Fine [-1,1]^2 mesh with a circular hole of radius 0.5 at the origin."""
    return _grid_hole_mesh(degree, (-1.0, 1.0), (-1.0, 1.0), h,
                           Circle((0.0, 0.0), 0.5), smooth)


class _HexComplex:
    """Hexahedra split into 24 tets each via face and body centers.

    Face centers are shared by corner-id key, so the decomposition conforms
    across arbitrary hex meshes (including O-grid patch seams).
    """

    def __init__(self):
        self.points = []
        self.keyed: dict = {}
        self.face_centers: dict = {}
        self.cells = []

    def point(self, xyz, key=None) -> int:
        if key is not None and key in self.keyed:
            return self.keyed[key]
        self.points.append(np.asarray(xyz, dtype=float))
        pid = len(self.points) - 1
        if key is not None:
            self.keyed[key] = pid
        return pid

    _HEX_FACES = ((0, 1, 2, 3), (4, 5, 6, 7), (0, 1, 5, 4),
                  (1, 2, 6, 5), (2, 3, 7, 6), (3, 0, 4, 7))

    def add_hex(self, corners, project_center=None):
        """corners: 8 point ids, bottom quad 0-3 then top quad 4-7."""
        pts = np.asarray(self.points)
        body = self.point(pts[list(corners)].mean(axis=0))
        for lf in self._HEX_FACES:
            quad = [corners[i] for i in lf]
            key = tuple(sorted(quad))
            fc = self.face_centers.get(key)
            if fc is None:
                c = np.asarray(self.points)[quad].mean(axis=0)
                if project_center is not None:
                    c = project_center(quad, c)
                fc = self.point(c)
                self.face_centers[key] = fc
            for i in range(4):
                a, b = quad[i], quad[(i + 1) % 4]
                self.cells.append([a, b, fc, body])

    def build(self, degree) -> HighOrderMesh:
        pts = np.asarray(self.points)
        cells = np.asarray(self.cells)
        vol = np.linalg.det(pts[cells][:, 1:] - pts[cells][:, :1])
        flip = vol < 0
        cells[flip] = cells[flip][:, [0, 2, 1, 3]]
        return elevate_to_degree(3, degree, pts, cells)


def _cube_surface_grid(n: int):
    """Vertices and quads of the cube surface [-1,1]^3 with n cells/edge."""
    coords = np.linspace(-1.0, 1.0, n + 1)
    keyed: dict = {}
    pts = []

    def vid(p):
        key = tuple(round(float(x) * 1e9) for x in p)
        if key not in keyed:
            pts.append(np.asarray(p, dtype=float))
            keyed[key] = len(pts) - 1
        return keyed[key]

    quads = []
    axes = [(0, 1, 2), (1, 2, 0), (2, 0, 1)]
    for ax, u, v in axes:
        for side in (-1.0, 1.0):
            for i in range(n):
                for j in range(n):
                    quad = []
                    for (di, dj) in ((0, 0), (1, 0), (1, 1), (0, 1)):
                        p = np.zeros(3)
                        p[ax] = side
                        p[u] = coords[i + di]
                        p[v] = coords[j + dj]
                        quad.append(vid(p))
                    quads.append(quad)
    return np.asarray(pts), quads


def sphere_in_cube(degree: int = 4, n: int = 3, nr: int = 1,
                   smooth: bool = True) -> HighOrderMesh:
    """[-1,1]^3 minus the ball of radius 0.5: radial O-grid of hexes split
    into tets (6 n^2 nr hexes -> 144 n^2 nr tets)."""
    return _sphere_ogrid(degree, n, nr, Sphere((0.0, 0.0, 0.0), 0.5),
                         np.zeros(3), 1.0, slab=0, smooth=smooth)


def sphere_in_prism(degree: int = 4, n: int = 3, nr: int = 1,
                    smooth: bool = True) -> HighOrderMesh:
    """[-2,2]x[-1,1]^2 minus the ball of radius 0.5 at (-1,0,0):
    O-grid in the left cube plus a hex slab filling [0,2]."""
    return _sphere_ogrid(degree, n, nr, Sphere((-1.0, 0.0, 0.0), 0.5),
                         np.array([-1.0, 0.0, 0.0]), 1.0, slab=2, smooth=smooth)


def _sphere_ogrid(degree, n, nr, sphere, center, half, slab,
                  smooth) -> HighOrderMesh:
    surf, quads = _cube_surface_grid(n)
    surf = center + half * surf
    cen = np.asarray(sphere.center, dtype=float)
    r = sphere.radius
    hc = _HexComplex()
    layer_ids = np.empty((nr + 1, surf.shape[0]), dtype=int)
    for i, p in enumerate(surf):
        ray = p - cen
        s = cen + ray / np.linalg.norm(ray) * r
        for k in range(nr + 1):
            t = k / nr
            layer_ids[k, i] = hc.point(s + (p - s) * t, key=("L", k, i))

    on_sphere = set(int(layer_ids[0, i]) for i in range(surf.shape[0]))

    def project_center(quad, c):
        if all(q in on_sphere for q in quad):
            return cen + (c - cen) / np.linalg.norm(c - cen) * r
        return c

    for quad in quads:
        for k in range(nr):
            corners = [int(layer_ids[k, q]) for q in quad] + \
                      [int(layer_ids[k + 1, q]) for q in quad]
            hc.add_hex(corners, project_center)

    if slab:
        # fill [x0, x0+slab] with a matching hex grid (shares the x0 face)
        coords = np.linspace(-1.0, 1.0, n + 1)
        x0 = center[0] + half
        xs = np.linspace(x0, x0 + slab, slab * n + 1)

        def gid(i, j, k):
            p = np.array([xs[i], center[1] + half * coords[j],
                          center[2] + half * coords[k]])
            key = tuple(round(float(x) * 1e9) for x in p)
            if key in hc.keyed:
                return hc.keyed[key]
            return hc.point(p, key=key)

        # register outer-layer O-grid points under coordinate keys too
        for i in range(surf.shape[0]):
            p = hc.points[layer_ids[nr, i]]
            key = tuple(round(float(x) * 1e9) for x in p)
            hc.keyed.setdefault(key, int(layer_ids[nr, i]))
        for i in range(slab * n):
            for j in range(n):
                for k in range(n):
                    corners = [gid(i, j, k), gid(i + 1, j, k),
                               gid(i + 1, j + 1, k), gid(i, j + 1, k),
                               gid(i, j, k + 1), gid(i + 1, j, k + 1),
                               gid(i + 1, j + 1, k + 1), gid(i, j + 1, k + 1)]
                    hc.add_hex(corners)

    mesh = hc.build(degree)
    h = 2.0 * half / n
    inc = facet_incidence(mesh)
    tags = {}
    for f, els in inc.items():
        if len(els) != 1:
            continue
        verts = mesh.nodes[list(f)]
        if np.all(np.abs(np.linalg.norm(verts - cen, axis=1) - r) < 1e-9 * r):
            tags[f] = CIRCLE_TAG
        else:
            tags[f] = OUTER_TAG
    mesh.boundary_tags = tags
    mesh.geometry = {CIRCLE_TAG: sphere}
    project_boundary_to_geometry(mesh)
    if smooth and degree > 1:
        from .smoothing import smooth_mesh
        from .distortion import DistortionConfig
        smooth_mesh(mesh)
    return mesh


BUILTIN_FIXTURES = {
    "circle_in_square": circle_in_square,
    "circle_in_rectangle": circle_in_rectangle,
    "fine_circle_hole": fine_circle_hole,
    "sphere_in_cube": sphere_in_cube,
    "sphere_in_prism": sphere_in_prism,
}


def builtin_fixture(name: str, degree: int = 4, small: bool = False) -> HighOrderMesh:
    """Builtin fixture by name; small variants shrink the 3D meshes."""
    if name not in BUILTIN_FIXTURES:
        raise ValueError(f"unknown builtin fixture {name!r}; "
                         f"available: {sorted(BUILTIN_FIXTURES)}")
    if name == "sphere_in_cube":
        return sphere_in_cube(degree, n=2, nr=1 if small else 2)
    if name == "sphere_in_prism":
        return sphere_in_prism(degree, n=2, nr=1 if small else 2)
    if name == "circle_in_rectangle" and small:
        return circle_in_rectangle(degree, h=0.3)
    if name == "fine_circle_hole" and small:
        return fine_circle_hole(degree, h=0.09)
    return BUILTIN_FIXTURES[name](degree)
