import numpy as np
import pytest
from scipy.integrate import quad as scipy_quad

from curvedmesh.fixtures import (elevate_to_degree, single_tet, single_triangle,
                                 tet_ring, two_triangles, vertex_fan)
from curvedmesh.master import build_master_element
from curvedmesh.mesh import (MeshTopology, curved_edge_length, edge_list,
                             edge_point, element_jacobian, patch_around_vertex,
                             shell_of_edge, validate_conformity)


def test_edge_list_counts():
    m = single_triangle(1)
    edges = edge_list(m)
    assert len(edges) == 3
    assert all(len(e.elements) == 1 and e.boundary for e in edges)

    m = two_triangles(1)
    edges = edge_list(m)
    assert len(edges) == 5
    shared = [e for e in edges if len(e.elements) == 2]
    assert len(shared) == 1 and not shared[0].boundary

    m = single_tet(1)
    assert len(edge_list(m)) == 6


def test_shell_of_edge():
    m = tet_ring(3)
    ring = shell_of_edge(m, (0, 1))
    assert len(ring) == 3
    m = tet_ring(4)
    assert len(shell_of_edge(m, (0, 1))) == 4
    # boundary edge: not flippable
    assert shell_of_edge(m, (0, 2)) == []


def test_patch_around_interior_vertex():
    m = vertex_fan(6, 1)
    patch = patch_around_vertex(m, 0)
    assert len(patch.element_ids) == 6
    assert 0 in patch.free_nodes
    assert patch.free_nodes.size == 1     # p=1: only the center is free


def test_patch_boundary_vertex_frozen():
    m = vertex_fan(6, 2)
    patch = patch_around_vertex(m, 1)     # rim vertex, on the boundary
    assert 1 in patch.frozen_nodes
    assert 1 not in patch.free_nodes


def test_patch_p4_two_triangles():
    m = two_triangles(4)
    patch = patch_around_vertex(m, 0)
    master = m.master
    # free: interior-diagonal high-order nodes + element interiors only
    # (all four vertices are on the square boundary, so none are free)
    free = set(int(n) for n in patch.free_nodes)
    diag_slots = [s for s, (k, e) in
                  enumerate(zip(master.node_kind, master.node_entity))
                  if k == "interior" or (k == "edge" and
                                         set(m.elements[0][list(e)]) == {0, 2})]
    expected = set()
    for eid in (0, 1):
        row = m.elements[eid]
        for s in range(master.num_nodes):
            kind = master.node_kind[s]
            ent = master.node_entity[s]
            gids = {int(row[v]) for v in ent}
            if kind == "interior" or (kind == "edge" and gids == {0, 2}):
                expected.add(int(row[s]))
    assert free == expected


def test_curved_edge_length_straight():
    m = elevate_to_degree(2, 3, [[0, 0], [3, 4], [-1, 0]], [[0, 1, 2]])
    assert abs(curved_edge_length(m, (0, 1)) - 5.0) < 1e-12


def test_curved_edge_length_parabola():
    # p=2 edge through (0,0), (0.5,0.25), (1,0): the curve y = x(1-x)
    verts = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]
    m = elevate_to_degree(2, 2, verts, [[0, 1, 2]])
    ids = m.elements[0]
    # canonical layout: slot 3 is the (0,1) edge midpoint
    m.nodes[ids[3]] = [0.5, 0.25]
    expect = scipy_quad(lambda x: np.hypot(1.0, 1.0 - 2.0 * x), 0.0, 1.0)[0]
    got = curved_edge_length(m, (0, 1))
    assert abs(got - expect) < 1e-6


def test_curved_edge_length_quarter_circle():
    p = 4
    verts = [[1.0, 0.0], [0.0, 1.0], [0.0, 0.0]]
    m = elevate_to_degree(2, p, verts, [[0, 1, 2]])
    from curvedmesh.master import edge_slots
    slots = edge_slots(m.master, 0, 1)
    ts = np.linspace(0, 1, p + 1)
    m.nodes[m.elements[0][list(slots)]] = np.stack(
        [np.cos(ts * np.pi / 2), np.sin(ts * np.pi / 2)], axis=1)
    assert abs(curved_edge_length(m, (0, 1)) - np.pi / 2) < 1e-4


def test_edge_point_midpoint():
    m = elevate_to_degree(2, 2, [[0, 0], [2, 0], [0, 2]], [[0, 1, 2]])
    assert np.allclose(edge_point(m, (0, 1), 0.5), [1.0, 0.0])


def test_element_jacobian_affine_constant():
    m = single_triangle(3, [[0.2, 0.1], [1.4, 0.3], [0.5, 1.8]])
    master = m.master
    rng = np.random.default_rng(7)
    pts = rng.random((10, 2)) * 0.4
    Js = [element_jacobian(m, 0, master, p) for p in pts]
    for J in Js[1:]:
        assert np.abs(J - Js[0]).max() < 1e-12


def test_element_jacobian_identity():
    m = single_triangle(2)
    J = element_jacobian(m, 0, m.master, [0.3, 0.3])
    assert np.allclose(J, np.eye(2), atol=1e-13)


def test_element_jacobian_curved_vs_finite_differences():
    m = single_triangle(2)
    ids = m.elements[0]
    m.nodes[ids[3]] = [0.5, 0.1]   # displace the (0,1) edge midpoint
    master = m.master

    def phi(xi):
        vals, _ = master.shape(np.asarray(xi))
        return vals @ m.nodes[ids]

    pt = np.array([0.5, 0.0])
    J = element_jacobian(m, 0, master, pt)
    h = 1e-7
    for c in range(2):
        e = np.zeros(2)
        e[c] = h
        fd = (phi(pt + e) - phi(pt - e)) / (2 * h)
        assert np.abs(J[:, c] - fd).max() < 1e-6
    Jv = element_jacobian(m, 0, master, [0.0, 0.0])
    assert np.abs(J - Jv).max() > 1e-3   # genuinely non-constant


def test_element_jacobian_mismatched_master():
    m = single_triangle(2)
    with pytest.raises(ValueError):
        element_jacobian(m, 0, build_master_element(2, 3), [0.2, 0.2])


def test_validate_conformity_ok(circle_square_p4):
    assert validate_conformity(circle_square_p4).ok


def test_validate_conformity_duplicate_node():
    m = two_triangles(2)
    # duplicate the shared-edge midpoint in the second element
    master = m.master
    shared_slot = None
    for s, (k, e) in enumerate(zip(master.node_kind, master.node_entity)):
        if k == "edge" and set(int(m.elements[1][v]) for v in e) == {0, 2}:
            shared_slot = s
    nid = m.elements[1][shared_slot]
    m.nodes = np.vstack([m.nodes, m.nodes[nid]])
    m.elements[1, shared_slot] = m.num_nodes - 1
    rep = validate_conformity(m)
    assert not rep.ok
    assert any(v.kind == "facet_node_mismatch" for v in rep.violations)


def test_validate_conformity_hanging_node():
    m = two_triangles(1)
    # split element 0 into 4 without splitting element 1
    v = m.nodes
    a, b, c = 0, 1, 2
    mab = len(v); v = np.vstack([v, (v[a] + v[b]) / 2])
    mbc = len(v); v = np.vstack([v, (v[b] + v[c]) / 2])
    mca = len(v); v = np.vstack([v, (v[c] + v[a]) / 2])
    elements = np.array([[a, mab, mca], [mab, b, mbc], [mca, mbc, c],
                         [mab, mbc, mca], [0, 2, 3]])
    m.nodes = v
    m.elements = elements
    rep = validate_conformity(m)
    assert not rep.ok
    assert any(v.kind == "hanging_node" for v in rep.violations)


def test_euler_relation(circle_square_p2):
    m = circle_square_p2
    V = m.vertex_ids().size
    E = len(edge_list(m))
    F = m.num_elements
    # planar domain with one hole: V - E + F = 0
    assert V - E + F == 0


def test_topology_rejects_overshared_facet():
    m = two_triangles(1)
    m.elements = np.vstack([m.elements, [[0, 2, 1]]])
    with pytest.raises(Exception):
        MeshTopology(m)
