import numpy as np
import pytest

from curvedmesh.distortion import (DistortionConfig, SingularMeasureError,
                                   aggregate_distortion, batch_distortion,
                                   delta_for_element, element_distortion,
                                   equilateral_jacobian, find_invalid_elements,
                                   ideal_map_for, linear_distortion,
                                   regularized_jacobian, _ideal_map)
from curvedmesh.fixtures import elevate_to_degree, single_triangle, vertex_fan
from curvedmesh.quadrature import quadrature_rule

ETA_RIGHT_TRIANGLE = 2.0 * np.sqrt(3.0) / 3.0


def affine_eta(verts):
    """Independent oracle: distortion of a straight triangle/tet from the
    closed-form affine map against the volume-matched equilateral."""
    verts = np.asarray(verts, dtype=float)
    d = verts.shape[1]
    V = (verts[1:] - verts[0]).T            # reference -> physical Jacobian
    vol = abs(np.linalg.det(V)) / (2.0 if d == 2 else 6.0)
    im = _ideal_map(d, vol)
    J = V @ np.linalg.inv(im.jacobian)
    return linear_distortion(J)


def test_eta_identity_is_one():
    assert abs(linear_distortion(np.eye(2)) - 1.0) < 1e-14
    assert abs(linear_distortion(np.eye(3)) - 1.0) < 1e-14


def test_eta_right_triangle_oracle():
    got = affine_eta([[0, 0], [1, 0], [0, 1]])
    assert abs(got - ETA_RIGHT_TRIANGLE) < 1e-10


def test_eta_equilateral_is_one():
    verts = [[0, 0], [1, 0], [0.5, np.sqrt(3) / 2]]
    assert abs(affine_eta(verts) - 1.0) < 1e-12


def test_singular_measure_signal():
    with pytest.raises(SingularMeasureError):
        linear_distortion(np.diag([1.0, 0.0]))
    with pytest.raises(SingularMeasureError):
        linear_distortion(np.diag([1.0, -1.0]))


def test_degenerate_regularized_is_finite():
    J = np.diag([1.0, 0.0])
    got = linear_distortion(J, delta=0.1)
    assert np.isfinite(got)
    assert abs(got - 1.0 / (2.0 * 0.1)) < 1e-12    # sigma_delta(0) = delta


def test_regularized_jacobian_values():
    assert regularized_jacobian(0.0, 0.25) == 0.25
    assert regularized_jacobian(3.0, 0.0) == 3.0
    got = regularized_jacobian(-3.0, 0.1)
    assert abs(got - (-3.0 + np.sqrt(9.04)) / 2.0) < 1e-15
    assert abs(got - 0.0033296378) < 1e-9


def test_regularized_jacobian_monotone_and_limits():
    s = np.linspace(-50, 50, 10001)
    out = regularized_jacobian(s, 0.5)
    assert np.all(np.diff(out) > 0)
    assert np.all(out > 0)
    # difference at sigma = 1e6, delta = 1 is delta^2/sigma = 1e-6
    assert regularized_jacobian(1e6, 1.0) - 1e6 <= 1.001e-6
    assert regularized_jacobian(-1e6, 1.0) < 1e-5


def test_delta_heuristic():
    assert abs(delta_for_element(1.0, 1e-3) - np.sqrt(0.001001)) < 1e-15
    assert delta_for_element(0.0, 0.5) == 0.0
    d1 = delta_for_element(2.5, 1e-3)
    assert abs(delta_for_element(7.5, 1e-3) - 3.0 * d1) < 1e-14


def test_ideal_map_sigma_star():
    m = single_triangle(1)
    im = ideal_map_for(m, 0)
    assert im.sigma_star > 0
    assert abs(im.sigma_star - 1.0) < 1e-14      # area 1/2 over ref area 1/2
    assert abs(np.linalg.det(im.jacobian) - im.sigma_star) < 1e-14
    ed = element_distortion(m, 0)
    assert abs(ed.eta_hat - ETA_RIGHT_TRIANGLE) < 1e-10


def test_scale_invariance_of_eta_hat():
    m1 = single_triangle(2, [[0, 0], [1.3, 0.1], [0.2, 0.9]])
    m2 = single_triangle(2, [[0, 0], [13.0, 1.0], [2.0, 9.0]])
    e1 = element_distortion(m1, 0).eta_hat
    e2 = element_distortion(m2, 0).eta_hat
    assert abs(e1 - e2) < 1e-12
    # delta heuristic scales with the d-th power of the scale factor
    d1 = delta_for_element(ideal_map_for(m1, 0).sigma_star, 1e-3)
    d2 = delta_for_element(ideal_map_for(m2, 0).sigma_star, 1e-3)
    assert abs(d2 - 100.0 * d1) < 1e-10


def test_invariance_rigid_and_scaling():
    rng = np.random.default_rng(11)
    count = 0
    while count < 1000:
        verts = rng.random((3, 2)) * 2.0 - 1.0
        area = 0.5 * np.linalg.det(np.vstack([verts[1] - verts[0],
                                              verts[2] - verts[0]]))
        if area < 1e-3:
            continue
        count += 1
        eta = affine_eta(verts)
        assert eta >= 1.0 - 1e-12
        th = rng.random() * 2 * np.pi
        R = np.array([[np.cos(th), -np.sin(th)], [np.sin(th), np.cos(th)]])
        s = 0.1 + rng.random() * 5.0
        moved = (verts @ R.T) * s + rng.random(2)
        assert abs(affine_eta(moved) - eta) < 1e-12 * eta


def test_element_distortion_affine_matches_linear():
    verts = [[0.1, -0.2], [1.7, 0.3], [0.4, 1.1]]
    expect = affine_eta(verts)
    for p in (1, 2, 4):
        m = single_triangle(p, verts)
        got = element_distortion(m, 0)
        assert abs(got.eta_hat - expect) < 1e-10
        assert got.valid and 0 < got.quality <= 1


def test_element_distortion_ideal_any_degree():
    verts = [[0, 0], [1, 0], [0.5, np.sqrt(3) / 2]]
    for p in (1, 2, 4):
        m = single_triangle(p, verts)
        assert abs(element_distortion(m, 0).eta_hat - 1.0) < 1e-10


def test_element_distortion_quadrature_order_independent_affine():
    verts = [[0.1, -0.2], [1.7, 0.3], [0.4, 1.1]]
    m = single_triangle(4, verts)
    vals = [element_distortion(m, 0, rule=quadrature_rule(2, k)).eta_hat
            for k in (8, 12, 16, 20)]
    assert max(vals) - min(vals) < 1e-12


def _curved_p2_triangle():
    m = single_triangle(2)
    ids = m.elements[0]
    # hypotenuse midpoint displaced from (0.5, 0.5) to (0.6, 0.6)
    hyp_slot = None
    master = m.master
    for s, (k, e) in enumerate(zip(master.node_kind, master.node_entity)):
        if k == "edge" and set(int(ids[v]) for v in e) == {1, 2}:
            hyp_slot = s
    m.nodes[ids[hyp_slot]] = [0.6, 0.6]
    return m


def test_element_distortion_curved_brute_force_oracle():
    m = _curved_p2_triangle()
    master = m.master
    # dense-grid oracle: physical-measure average of the pointwise measure
    n = 700
    pts = []
    for i in range(n):
        for j in range(n - i):
            pts.append(((i + 1.0 / 3) / n, (j + 1.0 / 3) / n))
    pts = np.asarray(pts)
    _, grads = master.shape(pts)
    X = m.nodes[m.elements[0]]
    DphiP = np.einsum("ka,qkc->qac", X, grads)
    im = ideal_map_for(m, 0)
    J = DphiP @ im.inverse
    f = np.einsum("qab,qab->q", J, J)
    det = J[:, 0, 0] * J[:, 1, 1] - J[:, 0, 1] * J[:, 1, 0]
    eta = f / (2.0 * np.abs(det))
    w = np.abs(det)
    oracle = np.sqrt(np.sum(eta ** 2 * w) / np.sum(w))
    got = element_distortion(m, 0)
    assert got.valid
    assert abs(got.eta_hat - oracle) / oracle < 1e-3


def test_eta_hat_converges_with_order():
    m = _curved_p2_triangle()
    vals = [element_distortion(m, 0, rule=quadrature_rule(2, k)).eta_hat
            for k in (4, 8, 12, 16, 20)]
    diffs = np.abs(np.diff(vals))
    assert diffs[-1] < diffs[0]
    assert diffs[-1] < 1e-6


def test_eta_delta_converges_to_eta():
    rng = np.random.default_rng(3)
    for _ in range(50):
        verts = rng.random((3, 2)) * 2 - 1
        if np.linalg.det(np.vstack([verts[1] - verts[0],
                                    verts[2] - verts[0]])) < 0.05:
            continue
        eta = affine_eta(verts)
        V = (np.asarray(verts, dtype=float)[1:] - verts[0]).T
        vol = abs(np.linalg.det(V)) / 2
        J = V @ np.linalg.inv(_ideal_map(2, vol).jacobian)
        errs = [abs(linear_distortion(J, delta=d) - eta)
                for d in (1e-2, 1e-4, 1e-8)]
        assert errs[0] >= errs[1] >= errs[2]
        assert errs[2] < 1e-6


def test_aggregate_distortion():
    verts = [[0, 0], [1, 0], [0.5, np.sqrt(3) / 2]]
    m = single_triangle(2, verts)
    assert abs(aggregate_distortion(m, [0]) - 1.0) < 1e-10
    fan = vertex_fan(6, 2)
    assert abs(aggregate_distortion(fan, range(6)) - 1.0) < 1e-10
    with pytest.raises(ValueError):
        aggregate_distortion(fan, [])
    # arithmetic: mean of squared element values
    m2 = single_triangle(1)     # eta = 2 sqrt(3)/3
    agg = aggregate_distortion(m2, [0])
    assert abs(agg - ETA_RIGHT_TRIANGLE ** 2) < 1e-10


def test_find_invalid_elements(circle_square_p4):
    assert find_invalid_elements(circle_square_p4) == []
    m = vertex_fan(6, 2)
    m.elements[2, [0, 1]] = m.elements[2, [1, 0]]   # swap two vertices
    assert 2 in find_invalid_elements(m)


def test_find_invalid_corner_only_inversion():
    # curve a p=4 element so inversion hides at a corner between
    # quadrature points: found via lattice-point sampling
    from curvedmesh.distortion import _grad_table, _lattice_grad_table, _det
    m = single_triangle(4)
    master = m.master
    ids = m.elements[0]
    slot = None
    for s, (k, e) in enumerate(zip(master.node_kind, master.node_entity)):
        if k == "edge" and set(int(ids[v]) for v in e) == {0, 1} and \
                abs(master.ref_nodes[s][0] - 0.25) < 1e-9:
            slot = s
    base = m.nodes[ids[slot]].copy()
    w, gq = _grad_table(2, 4, DistortionConfig().resolve_order(2, 4))
    gl = _lattice_grad_table(2, 4)
    found = None
    for ang in np.linspace(0.0, 2 * np.pi, 37):
        direction = np.array([np.cos(ang), np.sin(ang)])
        for t in np.linspace(0.0, 0.5, 201):
            m.nodes[ids[slot]] = base + t * direction
            X = m.nodes[m.elements[0]]
            dq = _det(np.einsum("ka,qkc->qac", X, gq))
            dl = _det(np.einsum("ka,qkc->qac", X, gl))
            if dq.min() > 0 and dl.min() <= 0:
                found = (ang, t)
                break
        if found:
            break
    assert found is not None, "no corner-only inversion found in sweep"
    assert find_invalid_elements(m) == [0]


def test_quality_range_on_fixture(circle_square_p4):
    eta, _, valid = batch_distortion(circle_square_p4, DistortionConfig())
    assert valid.all()
    q = 1.0 / eta
    assert np.all(q > 0) and np.all(q <= 1 + 1e-12)


def test_config_validation():
    with pytest.raises(ValueError):
        DistortionConfig(alpha=0.0)
    with pytest.raises(ValueError):
        DistortionConfig(r=0)
    with pytest.raises(ValueError):
        DistortionConfig(delta_mode="bogus")
    assert DistortionConfig().resolve_order(2, 4) >= 8


def test_equilateral_jacobians():
    W2 = equilateral_jacobian(2)
    assert abs(np.linalg.det(W2) - np.sqrt(3) / 2) < 1e-14
    W3 = equilateral_jacobian(3)
    assert abs(np.linalg.det(W3) - np.sqrt(2) / 2) < 1e-14
    # all edges of the image simplex have unit length
    v = np.vstack([np.zeros(3), W3.T])
    for i in range(4):
        for j in range(i + 1, 4):
            assert abs(np.linalg.norm(v[i] - v[j]) - 1.0) < 1e-12
