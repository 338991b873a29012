"""Reference simplex elements with equispaced Lagrange node layouts.

The reference element is the unit right simplex (vertices at the origin and
the unit axis points).  Nodes are laid out in canonical order: vertices,
then edge nodes (per edge, by increasing parameter), then face nodes (3D),
then interior nodes.  File-format specific orderings (Gmsh, VTK) are handled
by permutation tables in the io module.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

MAX_DEGREE = 10

TRI_EDGES = ((0, 1), (1, 2), (2, 0))
TET_EDGES = ((0, 1), (1, 2), (2, 0), (0, 3), (1, 3), (2, 3))
TET_FACES = ((0, 1, 2), (0, 1, 3), (1, 2, 3), (0, 2, 3))


def simplex_node_count(dim: int, degree: int) -> int:
    """Number of Lagrange nodes of a degree-p simplex element."""
    p = degree
    if dim == 1:
        return p + 1
    if dim == 2:
        return (p + 1) * (p + 2) // 2
    if dim == 3:
        return (p + 1) * (p + 2) * (p + 3) // 6
    raise ValueError(f"unsupported dimension {dim}")


def _lattice_nodes(dim: int, degree: int):
    """Canonical node lattice: list of (multi_index, kind, entity).

    multi_index is the length-(dim+1) barycentric integer tuple summing to
    degree; entity is the tuple of local vertices spanning the owning
    sub-simplex.
    """
    p = degree
    nv = dim + 1
    nodes = []

    def unit(i, w):
        m = [0] * nv
        m[i] = w
        return m

    for v in range(nv):
        nodes.append((tuple(unit(v, p)), "vertex", (v,)))

    edges = TRI_EDGES if dim == 2 else TET_EDGES
    for (a, b) in edges:
        for k in range(1, p):
            m = [0] * nv
            m[a] = p - k
            m[b] = k
            nodes.append((tuple(m), "edge", (a, b)))

    if dim == 3:
        for (a, b, c) in TET_FACES:
            face_nodes = []
            for wb in range(1, p):
                for wc in range(1, p - wb):
                    wa = p - wb - wc
                    if wa < 1:
                        continue
                    m = [0] * nv
                    m[a], m[b], m[c] = wa, wb, wc
                    face_nodes.append(((wc, wb), tuple(m)))
            for _, m in sorted(face_nodes):
                nodes.append((m, "face", (a, b, c)))

    interior = []
    for m in _full_lattice(nv, p):
        if all(w >= 1 for w in m):
            interior.append((tuple(reversed(m[1:])), tuple(m)))
    for _, m in sorted(interior):
        nodes.append((m, "interior", tuple(range(nv))))
    return nodes


def _full_lattice(nv, p):
    if nv == 1:
        yield (p,)
        return
    for w in range(p + 1):
        for rest in _full_lattice(nv - 1, p - w):
            yield (w,) + rest


def _factor_eval(lam: np.ndarray, m: int, p: int):
    """Value and derivative in lambda of prod_{r<m} (p*lam - r)/(m - r)."""
    val = np.ones_like(lam)
    der = np.zeros_like(lam)
    for r in range(m):
        c = 1.0 / (m - r)
        f = (p * lam - r) * c
        der = der * f + val * (p * c)
        val = val * f
    return val, der


def line_shape(degree: int, t: np.ndarray):
    """Equispaced 1D Lagrange basis on [0, 1]: values and d/dt.

    Returns arrays of shape (npts, degree+1); node k sits at t = k/degree.
    """
    t = np.atleast_1d(np.asarray(t, dtype=float))
    p = degree
    n = t.shape[0]
    vals = np.empty((n, p + 1))
    ders = np.empty((n, p + 1))
    lam = np.stack([1.0 - t, t], axis=0)
    dlam = np.array([-1.0, 1.0])
    for k in range(p + 1):
        m = (p - k, k)
        b0, db0 = _factor_eval(lam[0], m[0], p)
        b1, db1 = _factor_eval(lam[1], m[1], p)
        vals[:, k] = b0 * b1
        ders[:, k] = dlam[0] * db0 * b1 + dlam[1] * b0 * db1
    return vals, ders


@dataclass(frozen=True)
class MasterElement:
    """Reference simplex with Lagrange basis evaluation data.

    ref_nodes holds the node coordinates on the reference simplex in
    canonical order; lattice holds the matching barycentric multi-indices.
    """

    dim: int
    degree: int
    ref_nodes: np.ndarray          # (K, dim)
    lattice: np.ndarray            # (K, dim+1) ints
    node_kind: tuple               # per node: vertex|edge|face|interior
    node_entity: tuple             # per node: local vertex tuple of owner
    edges: tuple                   # ((a, b), slot tuple ordered a->b)
    faces: tuple                   # 3D only: ((a, b, c), slot tuple)

    @property
    def num_nodes(self) -> int:
        return self.ref_nodes.shape[0]

    @property
    def vertex_slots(self):
        return tuple(range(self.dim + 1))

    def shape(self, points: np.ndarray):
        """Shape values and gradients at reference points.

        points: (n, dim) or (dim,).  Returns (values, grads) with shapes
        (n, K) and (n, K, dim); leading axis squeezed for a single point.
        Polynomials extend globally, so points outside the simplex are fine.
        """
        pts = np.asarray(points, dtype=float)
        single = pts.ndim == 1
        pts = np.atleast_2d(pts)
        n = pts.shape[0]
        p = self.degree
        nv = self.dim + 1
        lam = np.empty((nv, n))
        lam[0] = 1.0 - pts.sum(axis=1)
        for j in range(self.dim):
            lam[j + 1] = pts[:, j]

        K = self.num_nodes
        vals = np.empty((n, K))
        grads = np.empty((n, K, self.dim))
        B = np.empty((nv, n))
        dB = np.empty((nv, n))
        for k in range(K):
            m = self.lattice[k]
            for i in range(nv):
                B[i], dB[i] = _factor_eval(lam[i], int(m[i]), p)
            vals[:, k] = np.prod(B, axis=0)
            # dN/dlam_i = dB_i * prod_{j != i} B_j
            dN = np.empty((nv, n))
            for i in range(nv):
                prod = np.ones(n)
                for j in range(nv):
                    if j != i:
                        prod = prod * B[j]
                dN[i] = dB[i] * prod
            for c in range(self.dim):
                grads[:, k, c] = dN[c + 1] - dN[0]
        if single:
            return vals[0], grads[0]
        return vals, grads


@lru_cache(maxsize=None)
def build_master_element(dim: int, degree: int) -> MasterElement:
    """Master element for the given dimension and polynomial degree.

    Instances are cached and must be treated as immutable.
    """
    if dim not in (2, 3):
        raise ValueError(f"unsupported dimension {dim}; expected 2 or 3")
    if not (1 <= degree <= MAX_DEGREE):
        raise ValueError(f"unsupported degree {degree}; expected 1..{MAX_DEGREE}")

    nodes = _lattice_nodes(dim, degree)
    lattice = np.array([m for m, _, _ in nodes], dtype=int)
    ref_nodes = lattice[:, 1:].astype(float) / degree
    kinds = tuple(k for _, k, _ in nodes)
    entities = tuple(e for _, _, e in nodes)

    edge_defs = TRI_EDGES if dim == 2 else TET_EDGES
    edges = []
    for (a, b) in edge_defs:
        slots = [i for i, (k, e) in enumerate(zip(kinds, entities))
                 if k == "edge" and e == (a, b)]
        slots.sort(key=lambda i: lattice[i][b])
        edges.append(((a, b), tuple(slots)))

    faces = []
    if dim == 3:
        for f in TET_FACES:
            slots = tuple(i for i, (k, e) in enumerate(zip(kinds, entities))
                          if k == "face" and e == f)
            faces.append((f, slots))

    ref_nodes.setflags(write=False)
    lattice.setflags(write=False)
    return MasterElement(dim=dim, degree=degree, ref_nodes=ref_nodes,
                         lattice=lattice, node_kind=kinds, node_entity=entities,
                         edges=tuple(edges), faces=tuple(faces))


def eval_shape(master: MasterElement, point: np.ndarray):
    """Shape function values and gradients at a reference point."""
    return master.shape(point)


def edge_slots(master: MasterElement, a: int, b: int):
    """Element node slots along local edge a->b: (a, interior nodes, b).

    Slot order follows the a->b parameterization regardless of the stored
    canonical edge direction.
    """
    for (ea, eb), slots in master.edges:
        if (ea, eb) == (a, b):
            return (a,) + slots + (b,)
        if (ea, eb) == (b, a):
            return (a,) + tuple(reversed(slots)) + (b,)
    raise ValueError(f"({a}, {b}) is not an edge of the master element")


def straight_node_positions(master: MasterElement, vertex_coords: np.ndarray):
    """Node positions from the affine (vertex-defined) map of the element.

    vertex_coords: (dim+1, d) physical corner coordinates.
    """
    w = master.lattice.astype(float) / master.degree
    return w @ np.asarray(vertex_coords, dtype=float)
