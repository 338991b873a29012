import numpy as np
import pytest

from curvedmesh.master import (build_master_element, edge_slots, eval_shape,
                               line_shape, simplex_node_count,
                               straight_node_positions)


@pytest.mark.parametrize("dim,degree,count", [
    (2, 1, 3), (2, 2, 6), (2, 4, 15), (3, 1, 4), (3, 2, 10), (3, 4, 35),
])
def test_node_counts(dim, degree, count):
    m = build_master_element(dim, degree)
    assert m.num_nodes == count
    assert simplex_node_count(dim, degree) == count


def test_linear_triangle_is_barycentric():
    m = build_master_element(2, 1)
    pts = np.array([[0.25, 0.3], [0.0, 0.0], [0.6, 0.1]])
    vals, grads = m.shape(pts)
    lam = np.stack([1 - pts.sum(1), pts[:, 0], pts[:, 1]], axis=1)
    assert np.allclose(vals, lam, atol=1e-14)
    assert np.allclose(grads[0], [[-1, -1], [1, 0], [0, 1]], atol=1e-14)


def test_barycenter_values():
    m = build_master_element(2, 1)
    vals, _ = eval_shape(m, np.array([1 / 3, 1 / 3]))
    assert np.allclose(vals, [1 / 3, 1 / 3, 1 / 3], atol=1e-14)


@pytest.mark.parametrize("dim,degree", [
    (2, 1), (2, 2), (2, 4), (2, 7), (2, 10),
    (3, 1), (3, 2), (3, 4), (3, 6),
])
def test_kronecker_and_partition_of_unity(dim, degree):
    m = build_master_element(dim, degree)
    vals, _ = m.shape(m.ref_nodes)
    assert np.abs(vals - np.eye(m.num_nodes)).max() < 1e-12
    rng = np.random.default_rng(42)
    pts = rng.random((100, dim))
    pts /= np.maximum(pts.sum(axis=1, keepdims=True), 1.0) * 1.001
    vals, grads = m.shape(pts)
    assert np.abs(vals.sum(axis=1) - 1.0).max() < 1e-12
    assert np.abs(grads.sum(axis=1)).max() < 1e-11


def test_unsupported_parameters():
    with pytest.raises(ValueError):
        build_master_element(1, 2)
    with pytest.raises(ValueError):
        build_master_element(4, 2)
    with pytest.raises(ValueError):
        build_master_element(2, 0)
    with pytest.raises(ValueError):
        build_master_element(2, 11)


def test_edge_slots_orientation():
    m = build_master_element(2, 3)
    fwd = edge_slots(m, 0, 1)
    bwd = edge_slots(m, 1, 0)
    assert fwd[0] == 0 and fwd[-1] == 1
    assert bwd[0] == 1 and bwd[-1] == 0
    assert fwd[1:-1] == tuple(reversed(bwd[1:-1]))
    # parameters increase from the first vertex
    x = m.ref_nodes[list(fwd)]
    assert np.all(np.diff(x[:, 0]) > 0)


def test_straight_node_positions_affine():
    m = build_master_element(2, 4)
    verts = np.array([[1.0, 1.0], [3.0, 1.5], [1.2, 4.0]])
    pos = straight_node_positions(m, verts)
    # vertices map to vertices; all nodes are affine images of ref nodes
    assert np.allclose(pos[:3], verts)
    A = np.column_stack([verts[1] - verts[0], verts[2] - verts[0]])
    expect = verts[0] + m.ref_nodes @ A.T
    assert np.allclose(pos, expect, atol=1e-14)


def test_line_shape_partition():
    t = np.linspace(0, 1, 7)
    vals, ders = line_shape(4, t)
    assert np.abs(vals.sum(1) - 1).max() < 1e-13
    assert np.abs(ders.sum(1)).max() < 1e-12
    nodes = np.linspace(0, 1, 5)
    vals, _ = line_shape(4, nodes)
    assert np.abs(vals - np.eye(5)).max() < 1e-12
