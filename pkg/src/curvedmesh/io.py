"""Mesh persistence and reporting: Gmsh MSH, native JSON, VTK, quality.

The native JSON format is the source of truth (it carries the analytic
geometry descriptors, which MSH cannot); MSH 2.2/4.1 ASCII is the
interchange layer, with node orderings permuted between the Gmsh
convention and the canonical one at the file boundary.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .distortion import DistortionConfig, batch_distortion
from .master import build_master_element
from .mesh import (Circle, HighOrderMesh, MeshIntegrityError, Sphere,
                   curved_edge_lengths, edge_list, facet_incidence,
                   validate_conformity)

MSH_TRI = {1: 2, 2: 9, 3: 21, 4: 23}
MSH_TET = {1: 4, 2: 11, 3: 29, 4: 30}
MSH_LINE = {1: 1, 2: 8, 3: 26, 4: 27}
_CODE_TO_KIND = {}
for _p, _c in MSH_TRI.items():
    _CODE_TO_KIND[_c] = ("tri", _p)
for _p, _c in MSH_TET.items():
    _CODE_TO_KIND[_c] = ("tet", _p)
for _p, _c in MSH_LINE.items():
    _CODE_TO_KIND[_c] = ("line", _p)

VTK_LAGRANGE_TRIANGLE = 69
VTK_LAGRANGE_TETRAHEDRON = 71


class UnsupportedElementError(Exception):
    pass


# ---------------------------------------------------------------------------
# Gmsh node orderings (recursive convention), as lattice multi-indices

def _gmsh_line(p):
    if p == 0:
        return [(0,)]
    return [(0,), (p,)] + [(k,) for k in range(1, p)]


def _gmsh_triangle(p):
    if p == 0:
        return [(0, 0)]
    v = [(0, 0), (p, 0), (0, p)]
    pts = list(v)
    for (a, b) in ((0, 1), (1, 2), (2, 0)):
        A, B = np.array(v[a]), np.array(v[b])
        for k in range(1, p):
            pts.append(tuple((A + (B - A) * k // p).tolist()))
    if p >= 3:
        pts += [(i + 1, j + 1) for (i, j) in _gmsh_triangle(p - 3)]
    return pts


def _gmsh_tet(p):
    if p == 0:
        return [(0, 0, 0)]
    v = [(0, 0, 0), (p, 0, 0), (0, p, 0), (0, 0, p)]
    pts = list(v)
    for (a, b) in ((0, 1), (1, 2), (0, 2), (0, 3), (2, 3), (1, 3)):
        A, B = np.array(v[a]), np.array(v[b])
        for k in range(1, p):
            pts.append(tuple((A + (B - A) * k // p).tolist()))
    if p >= 3:
        for (a, b, c) in ((0, 2, 1), (0, 1, 3), (0, 3, 2), (3, 1, 2)):
            A = np.array(v[a])
            eb = (np.array(v[b]) - A) // p
            ec = (np.array(v[c]) - A) // p
            for (i, j) in _gmsh_triangle(p - 3):
                pts.append(tuple((A + eb * (i + 1) + ec * (j + 1)).tolist()))
    if p >= 4:
        pts += [(i + 1, j + 1, k + 1) for (i, j, k) in _gmsh_tet(p - 4)]
    return pts


@lru_cache(maxsize=None)
def gmsh_permutation(dim: int, degree: int) -> np.ndarray:
    """perm such that canonical_nodes[s] = gmsh_nodes[perm[s]]."""
    master = build_master_element(dim, degree)
    gm = _gmsh_triangle(degree) if dim == 2 else _gmsh_tet(degree)
    pos = {t: i for i, t in enumerate(gm)}
    perm = np.array([pos[tuple(int(x) for x in m[1:])]
                     for m in master.lattice], dtype=int)
    return perm


@lru_cache(maxsize=None)
def gmsh_inverse_permutation(dim: int, degree: int) -> np.ndarray:
    perm = gmsh_permutation(dim, degree)
    inv = np.empty_like(perm)
    inv[perm] = np.arange(perm.size)
    return inv


# ---------------------------------------------------------------------------
# MSH reading

def read_msh(path) -> HighOrderMesh:
    """Parse a Gmsh MSH 2.2 or 4.1 ASCII file into a conforming mesh."""
    with open(path) as fh:
        lines = fh.read().splitlines()
    sections = _split_sections(lines)
    if "MeshFormat" not in sections:
        raise ValueError(f"{path}: not a Gmsh MSH file")
    version = sections["MeshFormat"][0].split()[0]
    if version.startswith("2"):
        tags, coords, elems = _parse_msh2(sections)
    elif version.startswith("4"):
        tags, coords, elems = _parse_msh4(sections)
    else:
        raise ValueError(f"unsupported MSH version {version}")
    return _assemble(tags, coords, elems)


def _split_sections(lines):
    out = {}
    name = None
    for ln in lines:
        ln = ln.strip()
        if not ln:
            continue
        if ln.startswith("$End"):
            name = None
        elif ln.startswith("$"):
            name = ln[1:]
            out[name] = []
        elif name is not None:
            out[name].append(ln)
    return out


def _parse_msh2(sec):
    node_lines = sec.get("Nodes", [])
    n = int(node_lines[0])
    tags, coords = [], []
    for ln in node_lines[1:1 + n]:
        parts = ln.split()
        tags.append(int(parts[0]))
        coords.append([float(x) for x in parts[1:4]])
    elems = []
    elem_lines = sec.get("Elements", [])
    m = int(elem_lines[0])
    for ln in elem_lines[1:1 + m]:
        parts = [int(x) for x in ln.split()]
        etype, ntags = parts[1], parts[2]
        ptag = parts[3] if ntags >= 1 else 0
        nodes = parts[3 + ntags:]
        elems.append((etype, ptag, nodes))
    return tags, coords, elems


def _parse_msh4(sec):
    node_lines = sec.get("Nodes", [])
    it = iter(node_lines)
    header = next(it).split()
    nblocks = int(header[0])
    tags, coords = [], []
    for _ in range(nblocks):
        _dim, _etag, _par, nnodes = (int(x) for x in next(it).split())
        btags = [int(next(it)) for _ in range(nnodes)]
        for t in btags:
            tags.append(t)
        for _ in range(nnodes):
            coords.append([float(x) for x in next(it).split()[:3]])
    elems = []
    elem_lines = sec.get("Elements", [])
    it = iter(elem_lines)
    header = next(it).split()
    nblocks = int(header[0])
    for _ in range(nblocks):
        _dim, etag, etype, nel = (int(x) for x in next(it).split())
        for _ in range(nel):
            parts = [int(x) for x in next(it).split()]
            elems.append((etype, etag, parts[1:]))
    return tags, coords, elems


def _assemble(tags, coords, elems) -> HighOrderMesh:
    remap = {t: i for i, t in enumerate(tags)}
    coords = np.asarray(coords, dtype=float)
    for etype, _, _ in elems:
        if etype not in _CODE_TO_KIND:
            raise UnsupportedElementError(
                f"unsupported MSH element type {etype}")
    kinds = {_CODE_TO_KIND[e[0]][0] for e in elems}
    if "tet" in kinds:
        dim, main = 3, "tet"
    elif "tri" in kinds:
        dim, main = 2, "tri"
    else:
        raise ValueError("no triangle or tetrahedron elements in file")
    degrees = {_CODE_TO_KIND[e[0]][1] for e in elems
               if _CODE_TO_KIND[e[0]][0] == main}
    if len(degrees) != 1:
        raise ValueError(f"mixed element degrees {sorted(degrees)}")
    degree = degrees.pop()
    perm = gmsh_permutation(dim, degree)
    rows = []
    facets = []
    for etype, ptag, nodes in elems:
        kind, p = _CODE_TO_KIND[etype]
        ids = [remap[t] for t in nodes]
        if kind == main:
            rows.append([ids[j] for j in perm])
        elif kind == ("line" if dim == 2 else "tri"):
            nv = 2 if dim == 2 else 3
            facets.append((tuple(sorted(ids[:nv])), ptag))
    nodes_xy = coords[:, :dim]
    mesh = HighOrderMesh(dim, degree, nodes_xy, np.asarray(rows, dtype=np.int64),
                         {f: t for f, t in facets})
    rep = validate_conformity(mesh)
    if not rep.ok:
        raise MeshIntegrityError(
            f"non-conforming input: {rep.violations[:3]}")
    return mesh


# ---------------------------------------------------------------------------
# MSH writing (4.1)

def write_msh(mesh: HighOrderMesh, path) -> None:
    """Write MSH 4.1 ASCII; boundary facets become tagged lower-dim elements."""
    if mesh.degree > 4:
        raise ValueError("MSH export supports degree <= 4; use native JSON")
    dim = mesh.dim
    inv = gmsh_inverse_permutation(dim, mesh.degree)
    vol_code = (MSH_TRI if dim == 2 else MSH_TET)[mesh.degree]
    fac_code = (MSH_LINE if dim == 2 else MSH_TRI)[mesh.degree]

    bnd_rows = _boundary_facet_rows(mesh)
    btags = sorted({t for _, t in bnd_rows}) if bnd_rows else []
    lines = ["$MeshFormat", "4.1 0 8", "$EndMeshFormat"]

    lines.append("$Entities")
    if dim == 2:
        lines.append(f"0 {len(btags)} 1 0")
        for t in btags:
            lines.append(f"{t} 0 0 0 0 0 0 1 {t} 0")
        lines.append("1 0 0 0 0 0 0 1 1 0")
    else:
        lines.append(f"0 0 {len(btags)} 1")
        for t in btags:
            lines.append(f"{t} 0 0 0 0 0 0 1 {t} 0")
        lines.append("1 0 0 0 0 0 0 1 1 0")
    lines.append("$EndEntities")

    n = mesh.num_nodes
    lines += ["$Nodes", f"1 {n} 1 {n}", f"{dim} 1 0 {n}"]
    lines += [str(i + 1) for i in range(n)]
    for row in mesh.nodes:
        xyz = list(row) + [0.0] * (3 - dim)
        lines.append(" ".join(_fmt(x) for x in xyz))
    lines.append("$EndNodes")

    groups: dict = {}
    for row, t in bnd_rows:
        groups.setdefault((dim - 1, t, fac_code), []).append(row)
    vol_rows = [(mesh.elements[e][inv] + 1).tolist()
                for e in range(mesh.num_elements)]
    groups[(dim, 1, vol_code)] = vol_rows

    total = sum(len(v) for v in groups.values())
    lines += ["$Elements", f"{len(groups)} {total} 1 {total}"]
    tag = 1
    for (gdim, gtag, code), rows in sorted(groups.items()):
        lines.append(f"{gdim} {gtag} {code} {len(rows)}")
        for row in rows:
            lines.append(" ".join(str(x) for x in [tag] + list(row)))
            tag += 1
    lines.append("$EndElements")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def _boundary_facet_rows(mesh: HighOrderMesh):
    """Full high-order node rows (1-based, Gmsh order) of tagged facets."""
    if not mesh.boundary_tags:
        return []
    from .mesh import _facet_slot_table, edge_curve_nodes
    inc = facet_incidence(mesh)
    out = []
    if mesh.dim == 2:
        for f, t in sorted(mesh.boundary_tags.items()):
            ids = edge_curve_nodes(mesh, f)
            # gmsh line order: ends first, then interior ascending
            row = [ids[0], ids[-1]] + list(ids[1:-1])
            out.append(([int(i) + 1 for i in row], t))
        return out
    slot_table = _facet_slot_table(mesh.master)
    tri_master = build_master_element(2, mesh.degree)
    tri_inv = gmsh_inverse_permutation(2, mesh.degree)
    nv = 4
    for f, t in sorted(mesh.boundary_tags.items()):
        els = inc.get(f)
        if not els:
            continue
        eid = els[0]
        row = mesh.elements[eid]
        gl = {int(g): i for i, g in enumerate(row[:nv])}
        lf = tuple(sorted(gl[g] for g in f))
        slots = slot_table[lf]
        # order facet nodes as a canonical triangle of the facet vertices
        la, lb, lc = lf
        ref = build_master_element(3, mesh.degree).ref_nodes
        corners = np.vstack([np.zeros(3), np.eye(3)])
        A, B, C = corners[la], corners[lb], corners[lc]
        tri_pts = {}
        for s in slots:
            pt = ref[s]
            # barycentric of pt in the facet triangle
            M = np.column_stack([B - A, C - A])
            ab, res, *_ = np.linalg.lstsq(M, pt - A, rcond=None)
            key = (round(ab[0] * mesh.degree), round(ab[1] * mesh.degree))
            tri_pts[key] = int(row[s])
        ordered = [tri_pts[tuple(int(x) for x in m[1:])]
                   for m in tri_master.lattice]
        out.append(([ordered[j] + 1 for j in tri_inv], t))
    return out


# ---------------------------------------------------------------------------
# native JSON

def write_json(mesh: HighOrderMesh, path) -> None:
    geo = {}
    for t, g in mesh.geometry.items():
        geo[str(t)] = {"type": "sphere" if mesh.dim == 3 else "circle",
                       "center": list(g.center), "radius": g.radius}
    doc = {
        "format": "curvedmesh",
        "version": 1,
        "dim": mesh.dim,
        "degree": mesh.degree,
        "nodes": mesh.nodes.tolist(),
        "elements": mesh.elements.tolist(),
        "boundary_tags": [[[int(v) for v in f], int(t)] for f, t in
                          sorted(mesh.boundary_tags.items())],
        "geometry": geo,
    }
    with open(path, "w") as fh:
        json.dump(doc, fh)


def read_json(path) -> HighOrderMesh:
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("format") != "curvedmesh":
        raise ValueError(f"{path}: not a native mesh file")
    geo = {}
    for t, g in doc.get("geometry", {}).items():
        cls = Sphere if g["type"] == "sphere" else Circle
        geo[int(t)] = cls(tuple(g["center"]), float(g["radius"]))
    return HighOrderMesh(
        int(doc["dim"]), int(doc["degree"]),
        np.asarray(doc["nodes"], dtype=float),
        np.asarray(doc["elements"], dtype=np.int64),
        {tuple(f): t for f, t in doc.get("boundary_tags", [])},
        geo)


def read_mesh(path) -> HighOrderMesh:
    """Dispatch on file suffix: .msh or .json."""
    s = str(path)
    if s.endswith(".msh"):
        return read_msh(path)
    return read_json(path)


def write_mesh(mesh: HighOrderMesh, path) -> None:
    s = str(path)
    if s.endswith(".msh"):
        write_msh(mesh, path)
    elif s.endswith(".vtk"):
        write_vtk(mesh, path)
    else:
        write_json(mesh, path)


# ---------------------------------------------------------------------------
# VTK

@lru_cache(maxsize=None)
def _vtk_permutation(dim: int, degree: int) -> np.ndarray:
    """canonical slot -> VTK Lagrange position (same recursive layout)."""
    master = build_master_element(dim, degree)
    if dim == 2:
        order = _gmsh_triangle(degree)
    else:
        # VTK Lagrange tets list edges then faces in this vertex order
        p = degree
        v = [(0, 0, 0), (p, 0, 0), (0, p, 0), (0, 0, p)]
        pts = list(v)
        for (a, b) in ((0, 1), (1, 2), (2, 0), (0, 3), (1, 3), (2, 3)):
            A, B = np.array(v[a]), np.array(v[b])
            for k in range(1, p):
                pts.append(tuple((A + (B - A) * k // p).tolist()))
        if p >= 3:
            for (a, b, c) in ((0, 1, 3), (1, 2, 3), (2, 0, 3), (0, 2, 1)):
                A = np.array(v[a])
                eb = (np.array(v[b]) - A) // p
                ec = (np.array(v[c]) - A) // p
                for (i, j) in _gmsh_triangle(p - 3):
                    pts.append(tuple((A + eb * (i + 1) + ec * (j + 1)).tolist()))
        if p >= 4:
            pts += [(i + 1, j + 1, k + 1) for (i, j, k) in _gmsh_tet(p - 4)]
        order = pts
    pos = {t: i for i, t in enumerate(order)}
    inv = np.empty(master.num_nodes, dtype=int)
    for s, m in enumerate(master.lattice):
        inv[pos[tuple(int(x) for x in m[1:])]] = s
    return inv


def write_vtk(mesh: HighOrderMesh, path, per_element_scalars=None,
              scalar_name: str = "distortion") -> None:
    """Legacy ASCII unstructured grid with Lagrange simplex cells."""
    perm = _vtk_permutation(mesh.dim, mesh.degree)
    K = perm.size
    ctype = VTK_LAGRANGE_TRIANGLE if mesh.dim == 2 else VTK_LAGRANGE_TETRAHEDRON
    lines = ["# vtk DataFile Version 3.0", "curved simplex mesh", "ASCII",
             "DATASET UNSTRUCTURED_GRID",
             f"POINTS {mesh.num_nodes} double"]
    for row in mesh.nodes:
        xyz = list(row) + [0.0] * (3 - mesh.dim)
        lines.append(" ".join(_fmt(x) for x in xyz))
    E = mesh.num_elements
    lines.append(f"CELLS {E} {E * (K + 1)}")
    for row in mesh.elements:
        lines.append(" ".join(str(x) for x in [K] + row[perm].tolist()))
    lines.append(f"CELL_TYPES {E}")
    lines += [str(ctype)] * E
    if per_element_scalars is not None:
        vals = np.asarray(per_element_scalars, dtype=float)
        if vals.size != E:
            raise ValueError("scalar array length must equal element count")
        lines += [f"CELL_DATA {E}", f"SCALARS {scalar_name} double 1",
                  "LOOKUP_TABLE default"]
        lines += [_fmt(v) for v in vals]
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def _fmt(x: float) -> str:
    return f"{x:.17g}"


# ---------------------------------------------------------------------------
# quality report

@dataclass
class QualityReport:
    eta: np.ndarray
    quality: np.ndarray
    eta_max: float
    eta_agg: float
    invalid_count: int
    num_elements: int
    num_vertices: int
    num_edges: int
    edge_length_mean: float
    edge_length_min: float
    edge_length_max: float


def quality_report(mesh: HighOrderMesh,
                   config: DistortionConfig | None = None,
                   format: str | None = None):
    """Per-element distortion summary; optionally serialized."""
    config = config if config is not None else DistortionConfig()
    eta, _, valid = batch_distortion(mesh, config)
    inv = int((~valid).sum())
    with np.errstate(divide="ignore"):
        q = np.where(np.isfinite(eta) & (eta > 0), 1.0 / eta, 0.0)
    edges = edge_list(mesh)
    lengths = curved_edge_lengths(mesh, edges)
    agg = float(np.mean(eta ** 2)) if inv == 0 else np.inf
    rep = QualityReport(
        eta=eta, quality=q,
        eta_max=float(eta.max()) if inv == 0 else np.inf,
        eta_agg=agg, invalid_count=inv,
        num_elements=mesh.num_elements,
        num_vertices=int(mesh.vertex_ids().size),
        num_edges=len(edges),
        edge_length_mean=float(lengths.mean()),
        edge_length_min=float(lengths.min()),
        edge_length_max=float(lengths.max()))
    if format is None:
        return rep
    return serialize_report(rep, format)


def _sig6(x: float) -> str:
    if np.isinf(x):
        return "inf"
    return f"{x:.6g}"


def serialize_report(rep: QualityReport, format: str) -> str:
    scalars = [
        ("elements", rep.num_elements), ("vertices", rep.num_vertices),
        ("edges", rep.num_edges), ("invalid_count", rep.invalid_count),
        ("eta_max", _sig6(rep.eta_max)), ("eta_agg", _sig6(rep.eta_agg)),
        ("edge_length_mean", _sig6(rep.edge_length_mean)),
        ("edge_length_min", _sig6(rep.edge_length_min)),
        ("edge_length_max", _sig6(rep.edge_length_max)),
    ]
    if format == "json":
        doc = dict(scalars)
        doc["eta"] = [_sig6(v) for v in rep.eta]
        doc["quality"] = [_sig6(v) for v in rep.quality]
        return json.dumps(doc, indent=1)
    if format == "csv":
        lines = ["key,value"] + [f"{k},{v}" for k, v in scalars]
        return "\n".join(lines) + "\n"
    if format == "text":
        width = max(len(k) for k, _ in scalars)
        return "\n".join(f"{k:<{width}}  {v}" for k, v in scalars) + "\n"
    raise ValueError(f"unknown report format {format!r}")
