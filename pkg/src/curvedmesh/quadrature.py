"""Quadrature rules on the reference triangle and tetrahedron.

Rules are conical products of Gauss-Legendre and Gauss-Jacobi lines, which
gives positive weights and polynomial exactness at any requested order.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import roots_jacobi

MAX_ORDER = {2: 40, 3: 30}


@dataclass(frozen=True)
class QuadratureRule:
    """Points and weights on the reference simplex.

    Weights are positive and sum to the reference volume (1/2 for the
    triangle, 1/6 for the tetrahedron).  The rule integrates all monomials
    of total degree <= order exactly.
    """

    dim: int
    order: int
    points: np.ndarray   # (n, dim)
    weights: np.ndarray  # (n,)

    @property
    def num_points(self) -> int:
        return self.weights.shape[0]


def _jacobi_01(n: int, alpha: int):
    """Nodes/weights on [0,1] for integrals with weight (1-v)^alpha."""
    x, w = roots_jacobi(n, alpha, 0.0)
    return (x + 1.0) / 2.0, w / 2.0 ** (alpha + 1)


@lru_cache(maxsize=None)
def quadrature_rule(dim: int, order: int) -> QuadratureRule:
    """Conical-product rule exact for total degree <= order."""
    if dim not in (2, 3):
        raise ValueError(f"unsupported dimension {dim}")
    if not (1 <= order <= MAX_ORDER[dim]):
        raise ValueError(
            f"unsupported order {order}; supported 1..{MAX_ORDER[dim]} in {dim}D")
    n = order // 2 + 1
    u, wu = _jacobi_01(n, 0)
    v, wv = _jacobi_01(n, 1)
    if dim == 2:
        U, V = np.meshgrid(u, v, indexing="ij")
        WU, WV = np.meshgrid(wu, wv, indexing="ij")
        pts = np.stack([U * (1.0 - V), V], axis=-1).reshape(-1, 2)
        wts = (WU * WV).reshape(-1)
    else:
        s, ws = _jacobi_01(n, 2)
        U, V, S = np.meshgrid(u, v, s, indexing="ij")
        WU, WV, WS = np.meshgrid(wu, wv, ws, indexing="ij")
        x = U * (1.0 - V) * (1.0 - S)
        y = V * (1.0 - S)
        pts = np.stack([x, y, S], axis=-1).reshape(-1, 3)
        wts = (WU * WV * WS).reshape(-1)
    pts.setflags(write=False)
    wts.setflags(write=False)
    return QuadratureRule(dim=dim, order=order, points=pts, weights=wts)


@lru_cache(maxsize=None)
def line_rule(npts: int):
    """Gauss-Legendre points/weights on [0, 1] for edge-curve integrals."""
    x, w = np.polynomial.legendre.leggauss(npts)
    t = (x + 1.0) / 2.0
    wt = w / 2.0
    t.setflags(write=False)
    wt.setflags(write=False)
    return t, wt


def default_quadrature_order(dim: int, degree: int) -> int:
    """Default integration order for distortion evaluation.

    2D follows 2*p*d; in 3D that blows up the conical point count (order 24
    needs 13^3 points at p=4), so the 3D default stays at the 2*p floor.
    """
    if dim == 2:
        return 2 * degree * dim
    return max(2 * degree, 4)
