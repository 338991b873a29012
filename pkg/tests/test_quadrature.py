from math import factorial

import numpy as np
import pytest

from curvedmesh.quadrature import MAX_ORDER, line_rule, quadrature_rule


def exact_tri(a, b):
    return factorial(a) * factorial(b) / factorial(a + b + 2)


def exact_tet(a, b, c):
    return factorial(a) * factorial(b) * factorial(c) / factorial(a + b + c + 3)


@pytest.mark.parametrize("order", [1, 2, 4, 8, 12, 16, 20])
def test_triangle_monomial_exactness(order):
    r = quadrature_rule(2, order)
    assert np.all(r.weights > 0)
    assert abs(r.weights.sum() - 0.5) < 1e-14
    for a in range(order + 1):
        for b in range(order + 1 - a):
            got = np.sum(r.weights * r.points[:, 0] ** a * r.points[:, 1] ** b)
            assert abs(got - exact_tri(a, b)) < 1e-12, (a, b)


@pytest.mark.parametrize("order", [1, 2, 4, 8, 11, 14])
def test_tet_monomial_exactness(order):
    r = quadrature_rule(3, order)
    assert np.all(r.weights > 0)
    assert abs(r.weights.sum() - 1 / 6) < 1e-14
    for a in range(order + 1):
        for b in range(order + 1 - a):
            for c in range(order + 1 - a - b):
                got = np.sum(r.weights * r.points[:, 0] ** a *
                             r.points[:, 1] ** b * r.points[:, 2] ** c)
                assert abs(got - exact_tet(a, b, c)) < 1e-12, (a, b, c)


def test_specific_values():
    # unit measures
    assert abs(quadrature_rule(2, 3).weights.sum() - 0.5) < 1e-15
    assert abs(quadrature_rule(3, 5).weights.sum() - 1 / 6) < 1e-15
    # x^2 y^2 over the reference triangle
    r = quadrature_rule(2, 4)
    got = np.sum(r.weights * r.points[:, 0] ** 2 * r.points[:, 1] ** 2)
    assert abs(got - 1.0 / 180.0) < 1e-15


def test_supported_range():
    assert MAX_ORDER[2] >= 20 and MAX_ORDER[3] >= 14
    quadrature_rule(2, MAX_ORDER[2])
    quadrature_rule(3, MAX_ORDER[3])
    with pytest.raises(ValueError):
        quadrature_rule(2, 0)
    with pytest.raises(ValueError):
        quadrature_rule(2, MAX_ORDER[2] + 1)
    with pytest.raises(ValueError):
        quadrature_rule(1, 4)


def test_line_rule():
    t, w = line_rule(8)
    assert abs(w.sum() - 1.0) < 1e-14
    for k in range(2 * 8):
        assert abs(np.sum(w * t ** k) - 1.0 / (k + 1)) < 1e-13
