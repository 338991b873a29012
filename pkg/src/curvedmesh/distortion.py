"""Shape distortion measures for curved simplex elements.

The linear measure is the inverse mean-ratio metric of the affine map from
a volume-matched equilateral simplex to the element; the high-order measure
integrates it over the physical element.  A regularized Jacobian surrogate
keeps the measure finite on inverted elements so optimization can untangle.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .master import build_master_element
from .mesh import HighOrderMesh, straight_volumes
from .quadrature import default_quadrature_order, quadrature_rule

REF_VOLUME = {2: 0.5, 3: 1.0 / 6.0}


class SingularMeasureError(Exception):
    """Unregularized distortion requested on a degenerate/inverted Jacobian."""


@dataclass(frozen=True)
class DistortionConfig:
    """Knobs of the distortion measure and its regularization."""

    r: int = 2
    alpha: float = 1e-3
    quadrature_order: int | None = None
    delta_mode: str = "zero_if_valid"    # or "heuristic"
    ideal_shape: str = "equilateral"

    def __post_init__(self):
        if self.r < 1:
            raise ValueError("integration exponent must be >= 1")
        if self.alpha <= 0.0:
            raise ValueError("regularization constant must be positive")
        if self.delta_mode not in ("zero_if_valid", "heuristic"):
            raise ValueError(f"unknown delta mode {self.delta_mode!r}")

    def resolve_order(self, dim: int, degree: int) -> int:
        order = (self.quadrature_order if self.quadrature_order is not None
                 else default_quadrature_order(dim, degree))
        return max(order, 2 * degree)


@dataclass(frozen=True)
class ElementDistortion:
    eta_hat: float
    quality: float
    min_sigma: float
    valid: bool


@dataclass(frozen=True)
class IdealElementMap:
    """Affine map factor from the reference simplex to the scaled ideal."""

    jacobian: np.ndarray     # (d, d), maps reference -> ideal
    sigma_star: float        # det(jacobian) > 0
    volume: float            # physical measure of the ideal element

    @property
    def inverse(self) -> np.ndarray:
        return np.linalg.inv(self.jacobian)


def equilateral_jacobian(dim: int) -> np.ndarray:
    """Reference-to-unit-equilateral simplex Jacobian."""
    if dim == 2:
        return np.array([[1.0, 0.5],
                         [0.0, np.sqrt(3.0) / 2.0]])
    return np.array([[1.0, 0.5, 0.5],
                     [0.0, np.sqrt(3.0) / 2.0, np.sqrt(3.0) / 6.0],
                     [0.0, 0.0, np.sqrt(6.0) / 3.0]])


def regularized_jacobian(sigma, delta):
    """Smooth positive surrogate (sigma + sqrt(sigma^2 + 4 delta^2)) / 2."""
    sigma = np.asarray(sigma, dtype=float)
    out = 0.5 * (sigma + np.sqrt(sigma * sigma + 4.0 * np.square(delta)))
    return float(out) if out.ndim == 0 else out


def delta_for_element(sigma_star: float, alpha: float):
    """Element regularization parameter |sigma*| sqrt(alpha^2 + alpha)."""
    return np.abs(sigma_star) * np.sqrt(alpha * alpha + alpha)


def linear_distortion(J: np.ndarray, delta: float = 0.0) -> float:
    """Inverse mean-ratio distortion of one Jacobian, optionally regularized.

    J is the Jacobian of the ideal-to-physical map.  With delta == 0 this is
    the exact measure and requires det J > 0.
    """
    J = np.asarray(J, dtype=float)
    d = J.shape[0]
    fro2 = float(np.sum(J * J))
    sigma = float(np.linalg.det(J))
    if delta == 0.0:
        if sigma <= 0.0:
            raise SingularMeasureError(
                f"det J = {sigma:g} <= 0; regularize (delta > 0) to evaluate")
        s = sigma
    else:
        s = regularized_jacobian(sigma, delta)
    return fro2 / (d * abs(s) ** (2.0 / d))


def ideal_map_for(mesh: HighOrderMesh, element_id: int) -> IdealElementMap:
    """Volume-matched equilateral ideal map of one element."""
    vol = float(straight_volumes(mesh, [element_id])[0])
    v = abs(vol)
    if v == 0.0:
        v = _fallback_volume(mesh, element_id)
    return _ideal_map(mesh.dim, v)


def _ideal_map(dim: int, volume: float) -> IdealElementMap:
    W = equilateral_jacobian(dim)
    sigma_star = volume / REF_VOLUME[dim]
    c = (sigma_star / np.linalg.det(W)) ** (1.0 / dim)
    return IdealElementMap(jacobian=c * W, sigma_star=sigma_star, volume=volume)


def _fallback_volume(mesh: HighOrderMesh, element_id: int) -> float:
    """Average |volume| of elements sharing a vertex with a degenerate one."""
    nv = mesh.dim + 1
    verts = set(int(v) for v in mesh.elements[element_id, :nv])
    incident = [e for e in range(mesh.num_elements)
                if verts & set(int(v) for v in mesh.elements[e, :nv])]
    vols = np.abs(straight_volumes(mesh, incident))
    vols = vols[vols > 0.0]
    if vols.size == 0:
        raise SingularMeasureError(
            f"element {element_id} and all its neighbors are degenerate")
    return float(vols.mean())


@lru_cache(maxsize=None)
def _grad_table(dim: int, degree: int, order: int):
    """Shape gradients at quadrature points: (weights, grads (nq, K, d))."""
    master = build_master_element(dim, degree)
    rule = quadrature_rule(dim, order)
    _, grads = master.shape(rule.points)
    grads.setflags(write=False)
    return rule.weights, grads


@lru_cache(maxsize=None)
def _lattice_grad_table(dim: int, degree: int):
    """Shape gradients at the element's own lattice points (corner checks)."""
    master = build_master_element(dim, degree)
    _, grads = master.shape(master.ref_nodes)
    grads.setflags(write=False)
    return grads


def _det(J: np.ndarray) -> np.ndarray:
    """Determinants over the last two axes (d = 2 or 3), no LAPACK."""
    if J.shape[-1] == 2:
        return J[..., 0, 0] * J[..., 1, 1] - J[..., 0, 1] * J[..., 1, 0]
    return (J[..., 0, 0] * (J[..., 1, 1] * J[..., 2, 2] - J[..., 1, 2] * J[..., 2, 1])
            - J[..., 0, 1] * (J[..., 1, 0] * J[..., 2, 2] - J[..., 1, 2] * J[..., 2, 0])
            + J[..., 0, 2] * (J[..., 1, 0] * J[..., 2, 1] - J[..., 1, 1] * J[..., 2, 0]))


def element_sigma_stars(mesh: HighOrderMesh, element_ids=None) -> np.ndarray:
    """Ideal-map determinants sigma* per element (positive).

    Elements with (near-)degenerate straight hulls take a floor from the
    working set's mean volume so the ideal map and the delta heuristic stay
    bounded; the unregularized measure is scale invariant, so valid-element
    results are unaffected.
    """
    vols = np.abs(straight_volumes(mesh, element_ids))
    mean_pos = vols[vols > 0.0].mean() if np.any(vols > 0.0) else 0.0
    degenerate = vols <= 1e-9 * mean_pos
    if mean_pos > 0.0:
        vols = np.where(degenerate, mean_pos, vols)
    else:
        eids = (range(mesh.num_elements) if element_ids is None else element_ids)
        vols = np.array([_fallback_volume(mesh, int(e)) for e in eids])
    return vols / REF_VOLUME[mesh.dim]


def batch_distortion(mesh: HighOrderMesh, config: DistortionConfig,
                     element_ids=None, deltas=None):
    """Vectorized distortion of many elements.

    Returns (eta_hat, min_sigma, valid) arrays.  min_sigma is the minimum
    det of the ideal-to-physical Jacobian over quadrature points and the
    element's own lattice points (quadrature alone can miss corner
    inversion).  With delta == 0, invalid elements get eta_hat = +inf.
    """
    d = mesh.dim
    eids = (np.arange(mesh.num_elements) if element_ids is None
            else np.asarray(list(element_ids), dtype=int))
    if eids.size == 0:
        raise ValueError("empty element set")
    order = config.resolve_order(d, mesh.degree)
    w, grads = _grad_table(d, mesh.degree, order)
    lat_grads = _lattice_grad_table(d, mesh.degree)

    X = mesh.nodes[mesh.elements[eids]]                   # (E, K, d)
    sigma_star = element_sigma_stars(mesh, eids)          # (E,)
    scale = sigma_star ** (1.0 / d)
    Winv = np.linalg.inv(equilateral_jacobian(d))
    # A_e = inv(D_I) = Winv / c_e ; fold the scalar in afterwards
    DphiP = np.einsum("eka,qkc->eqac", X, grads, optimize=True)
    J = np.einsum("eqac,cb->eqab", DphiP, Winv, optimize=True) / scale[:, None, None, None]
    detP_lat = _det(np.einsum("eka,qkc->eqac", X, lat_grads, optimize=True))

    fro2 = np.einsum("eqab,eqab->eq", J, J, optimize=True)
    sig = _det(J)                                          # det DphiE
    min_sigma = np.minimum(sig.min(axis=1), (detP_lat / sigma_star[:, None]).min(axis=1))
    valid = min_sigma > 0.0

    if deltas is None:
        deltas = np.zeros(eids.size)
    deltas = np.broadcast_to(np.asarray(deltas, dtype=float), (eids.size,))

    s = regularized_jacobian(sig, deltas[:, None])
    with np.errstate(divide="ignore", invalid="ignore"):
        eta = fro2 / (d * np.abs(s) ** (2.0 / d))
    # physical integration weights |det DphiP|
    detP = sig * sigma_star[:, None]
    absP = np.abs(detP)
    T = np.einsum("q,eq->e", w, absP)
    floor = np.finfo(float).eps * sigma_star * REF_VOLUME[d]
    T = np.maximum(T, floor)
    r = float(config.r)
    with np.errstate(over="ignore", invalid="ignore"):
        num = np.einsum("q,eq->e", w, np.where(np.isfinite(eta), eta, 0.0) ** r * absP)
        eta_hat = (num / T) ** (1.0 / r)
    bad = np.logical_and(~valid, deltas == 0.0)
    eta_hat = np.where(bad, np.inf, eta_hat)
    # regularized evaluations on kinked integrands can still misbehave; be safe
    eta_hat = np.where(np.isnan(eta_hat), np.inf, eta_hat)
    return eta_hat, min_sigma, valid


def element_distortion(mesh: HighOrderMesh, element_id: int, master=None,
                       rule=None, config: DistortionConfig | None = None,
                       delta: float = 0.0) -> ElementDistortion:
    """Distortion of a single element; see batch_distortion."""
    config = config if config is not None else DistortionConfig()
    if master is not None and (master.dim != mesh.dim or master.degree != mesh.degree):
        raise ValueError("master element does not match mesh dim/degree")
    if rule is not None:
        config = DistortionConfig(r=config.r, alpha=config.alpha,
                                  quadrature_order=rule.order,
                                  delta_mode=config.delta_mode)
    eta, ms, valid = batch_distortion(mesh, config, [element_id], [delta])
    e = float(eta[0])
    q = 0.0 if not np.isfinite(e) or e == 0.0 else 1.0 / e
    return ElementDistortion(eta_hat=e, quality=q,
                             min_sigma=float(ms[0]), valid=bool(valid[0]))


def working_set_deltas(mesh: HighOrderMesh, element_ids,
                       config: DistortionConfig) -> np.ndarray:
    """Per-element delta for a working set.

    Zero when every member is valid (unless the mode forces the heuristic);
    otherwise each element gets the sigma*-scaled heuristic value.
    """
    eids = np.asarray(list(element_ids), dtype=int)
    if config.delta_mode == "zero_if_valid":
        _, _, valid = batch_distortion(mesh, config, eids)
        if valid.all():
            return np.zeros(eids.size)
    sigma_star = element_sigma_stars(mesh, eids)
    return delta_for_element(sigma_star, config.alpha)


def aggregate_distortion(mesh: HighOrderMesh, element_ids,
                         config: DistortionConfig | None = None) -> float:
    """Normalized sum of squared element distortions over a working set."""
    config = config if config is not None else DistortionConfig()
    eids = np.asarray(list(element_ids), dtype=int)
    if eids.size == 0:
        raise ValueError("empty element set")
    deltas = working_set_deltas(mesh, eids, config)
    eta, _, _ = batch_distortion(mesh, config, eids, deltas)
    return float(np.mean(eta ** 2))


def find_invalid_elements(mesh: HighOrderMesh,
                          config: DistortionConfig | None = None) -> list:
    """Element ids whose Jacobian determinant is <= 0 anywhere sampled."""
    config = config if config is not None else DistortionConfig()
    if mesh.num_elements == 0:
        return []
    _, _, valid = batch_distortion(mesh, config)
    return [int(e) for e in np.nonzero(~valid)[0]]
