"""Patch-wise simultaneous untangling and smoothing.

Free node coordinates of a patch are driven by Newton iterations with
backtracking line search on the normalized sum of squared element
distortions; whole-mesh smoothing applies this patch solve in Gauss-Seidel
sweeps over vertices.  The regularization parameter and the ideal-element
maps are held fixed while differentiating.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .distortion import (DistortionConfig, _grad_table, _lattice_grad_table,
                         _det, element_sigma_stars, equilateral_jacobian,
                         working_set_deltas, batch_distortion, REF_VOLUME)
from .mesh import ElementPatch, HighOrderMesh, MeshTopology, patch_around_vertex

_EPS2 = np.array([[0.0, 1.0], [-1.0, 0.0]])
_EPS3 = np.zeros((3, 3, 3))
for _i, _j, _k, _s in [(0, 1, 2, 1.0), (1, 2, 0, 1.0), (2, 0, 1, 1.0),
                       (0, 2, 1, -1.0), (2, 1, 0, -1.0), (1, 0, 2, -1.0)]:
    _EPS3[_i, _j, _k] = _s


@dataclass(frozen=True)
class SmoothConfig:
    """Stopping criteria and line-search constants for patch smoothing."""

    max_newton_iters: int = 30
    grad_tol: float = 1e-8          # relative gradient tolerance
    step_tol: float = 1e-10         # node movement, units of local edge length
    shrink: float = 0.5
    armijo: float = 1e-4
    max_halvings: int = 40
    max_sweeps: int = 50
    sweep_improve_tol: float = 1e-6  # relative objective decrease per sweep
    sweep_move_tol: float = 1e-10    # node movement, units of local edge length
    max_untangle_rounds: int = 10    # restarts of the regularized phase

    def __post_init__(self):
        if not (0.0 < self.shrink < 1.0):
            raise ValueError("line-search shrink factor must be in (0, 1)")
        for name in ("grad_tol", "step_tol", "armijo",
                     "sweep_improve_tol", "sweep_move_tol"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"{name} must be positive")


@dataclass
class PatchSmoothReport:
    eta_agg_before: float
    eta_agg_after: float
    untangled: bool
    iterations: int
    moved: float                 # max node displacement


class PatchObjective:
    """Distortion objective of a patch as a function of free node coords.

    The per-element regularization deltas and ideal maps are frozen at
    construction.  Only the r = 2 exponent is supported for optimization.
    """

    def __init__(self, mesh: HighOrderMesh, patch: ElementPatch,
                 config: DistortionConfig | None = None, deltas=None):
        config = config if config is not None else DistortionConfig()
        if config.r != 2:
            raise ValueError("optimization supports the default exponent r = 2")
        self.mesh = mesh
        self.patch = patch
        self.config = config
        d = mesh.dim
        self.d = d
        eids = np.asarray(patch.element_ids, dtype=int)
        self.eids = eids
        order = config.resolve_order(d, mesh.degree)
        self.w, gradN = _grad_table(d, mesh.degree, order)
        self.lat_grads = _lattice_grad_table(d, mesh.degree)

        elems = mesh.elements[eids]                      # (E, K)
        self.pnodes = np.unique(elems)
        loc = {int(n): i for i, n in enumerate(self.pnodes)}
        self.lelems = np.vectorize(loc.__getitem__)(elems)
        self.coords = mesh.nodes[self.pnodes].copy()     # (P, d) scratch

        self.free = np.asarray(patch.free_nodes, dtype=int)
        self.lfree = np.array([loc[int(n)] for n in self.free], dtype=int)
        self.n_dof = self.lfree.size * d
        dof_of_local = np.full(self.pnodes.size, -1, dtype=int)
        dof_of_local[self.lfree] = np.arange(self.lfree.size)
        self.dofmap = dof_of_local[self.lelems]          # (E, K): free idx or -1

        self.sigma_star = element_sigma_stars(mesh, eids)
        self.scale = self.sigma_star ** (1.0 / d)
        Winv = np.linalg.inv(equilateral_jacobian(d))
        # g[e,q,k,a] = sum_c Ainv[e,c,a] gradN[q,k,c], Ainv = Winv / scale_e
        self.g = np.einsum("ca,qkc->qka", Winv, gradN)[None, ...] / \
            self.scale[:, None, None, None]
        self.glat = np.einsum("ca,qkc->qka", Winv, self.lat_grads)[None, ...] / \
            self.scale[:, None, None, None]

        if deltas is None:
            deltas = np.zeros(eids.size)
        self.deltas = np.broadcast_to(np.asarray(deltas, dtype=float),
                                      (eids.size,)).copy()
        self.floor = np.finfo(float).eps * self.sigma_star * REF_VOLUME[d]
        # Regularized (untangling) runs integrate over the fixed reference
        # element: physical weights vanish exactly where elements degenerate,
        # which would reward collapsing them instead of untangling.
        self.reference_measure = bool(np.any(self.deltas > 0.0))

        # static folds for fast Hessian assembly
        E, nq, K, _ = self.g.shape
        self.g_fold = np.ascontiguousarray(
            self.g.transpose(0, 2, 1, 3).reshape(E, K, nq * d))  # (q, c) fold
        self.gT_static = np.ascontiguousarray(np.swapaxes(self.g, 2, 3))
        self._esel = []
        arange_d = np.arange(d)
        for e in range(eids.size):
            sel = np.nonzero(self.dofmap[e] >= 0)[0]
            rows = (sel[:, None] * d + arange_d).ravel()
            cols = (self.dofmap[e][sel][:, None] * d + arange_d).ravel()
            self._esel.append((np.ix_(cols, cols), np.ix_(rows, rows)))

        # characteristic edge length for step tolerances
        nv = d + 1
        verts = self.coords[self.lelems[:, :nv]]
        diffs = verts[:, 1:, :] - verts[:, :1, :]
        self.edge_scale = float(np.linalg.norm(diffs, axis=2).mean())
        self._scratch = self.coords.copy()

    # -- coordinate plumbing ------------------------------------------------
    def x0(self) -> np.ndarray:
        return self.coords[self.lfree].ravel().copy()

    def _coords_for(self, xfree: np.ndarray) -> np.ndarray:
        c = self._scratch
        c[:] = self.coords
        c[self.lfree] = xfree.reshape(-1, self.d)
        return c

    def commit(self, xfree: np.ndarray) -> None:
        """Write free coordinates into the owning mesh (frozen untouched)."""
        self.coords[self.lfree] = xfree.reshape(-1, self.d)
        self.mesh.nodes[self.free] = self.coords[self.lfree]

    # -- core evaluation ----------------------------------------------------
    def _kinematics(self, coords):
        X = coords[self.lelems]                           # (E, K, d)
        # J[e,q,a,b] = sum_k X[e,k,a] g[e,q,k,b]
        J = np.matmul(np.swapaxes(X, 1, 2)[:, None, :, :],
                      np.broadcast_to(self.g, (X.shape[0],) + self.g.shape[1:]))
        f = np.einsum("eqab,eqab->eq", J, J)
        sig = _det(J)
        return X, J, f, sig

    def min_sigma(self, xfree) -> float:
        """Minimum Jacobian det over quadrature and lattice sample points."""
        coords = self._coords_for(np.asarray(xfree, dtype=float))
        X = coords[self.lelems]
        _, _, _, sig = self._kinematics(coords)
        Jl = np.matmul(np.swapaxes(X, 1, 2)[:, None, :, :],
                       np.broadcast_to(self.glat, (X.shape[0],) + self.glat.shape[1:]))
        return float(min(sig.min(), _det(Jl).min()))

    def value(self, xfree) -> float:
        coords = self._coords_for(np.asarray(xfree, dtype=float))
        _, _, f, sig = self._kinematics(coords)
        return self._assemble_value(f, sig)

    def _eta_terms(self, f, sig):
        d = self.d
        delta = self.deltas[:, None]
        if np.all(self.deltas == 0.0):
            if sig.min() <= 0.0:
                return None
            R = sig
            s = sig
        else:
            R = np.sqrt(sig * sig + 4.0 * delta * delta)
            # tiny deltas with very negative sigma underflow to s == 0
            s = np.maximum(0.5 * (sig + R), 1e-300)
        m2 = 2.0 / d
        with np.errstate(over="ignore"):
            sm = s ** (-m2)
            a_eta = sm / d
            eta = f * a_eta
        return eta, a_eta, R, s

    def _assemble_value(self, f, sig):
        terms = self._eta_terms(f, sig)
        if terms is None:
            return np.inf
        eta = terms[0]
        with np.errstate(over="ignore"):
            if self.reference_measure:
                return float(np.mean((eta * eta) @ self.w) / REF_VOLUME[self.d])
            absP = np.abs(sig) * self.sigma_star[:, None]
            N = (eta * eta * absP) @ self.w
            T = np.maximum(absP @ self.w, self.floor)
            return float(np.mean(N / T))

    def value_grad(self, xfree, with_hess: bool = False):
        coords = self._coords_for(np.asarray(xfree, dtype=float))
        X, J, f, sig = self._kinematics(coords)
        terms = self._eta_terms(f, sig)
        if terms is None:
            g = np.full(self.n_dof, np.nan)
            return (np.inf, g, None) if with_hess else (np.inf, g)
        eta, a_eta, R, s = terms
        d = self.d
        E, nq = f.shape
        m2 = 2.0 / d
        c1 = -m2 / R
        b_eta = eta * c1

        C = _cofactor(J)
        # u = grad f, v = grad sigma, per dof (e,q,k,c)
        u = 2.0 * np.matmul(self.g, np.swapaxes(J, 2, 3))
        v = np.matmul(self.g, np.swapaxes(C, 2, 3))

        wq = self.w[None, :]
        if self.reference_measure:
            sgn = np.zeros_like(sig)
            DI = np.zeros((E, 1))
            absP = np.ones_like(sig)
            T = np.full(E, REF_VOLUME[d])
            floored = np.ones(E, dtype=bool)
        else:
            sgn = np.sign(sig)
            DI = self.sigma_star[:, None]
            absP = np.abs(sig) * DI
            Traw = absP @ self.w
            T = np.maximum(Traw, self.floor)
            floored = Traw < self.floor
        N = (eta * eta * absP) @ self.w

        K = self.lelems.shape[1]
        Kd = K * d
        U = u.reshape(E, nq, Kd)
        V = v.reshape(E, nq, Kd)
        # gN = sum_q w (2 eta absP grad_eta + eta^2 sgn DI v) as batched matvec
        au = wq * 2.0 * eta * absP * a_eta
        av = wq * (2.0 * eta * absP * b_eta + eta * eta * sgn * DI)
        at = wq * (sgn * DI)
        gN = (np.matmul(au[:, None, :], U) + np.matmul(av[:, None, :], V))[:, 0, :]
        gT = np.matmul(at[:, None, :], V)[:, 0, :]
        gT[floored] = 0.0
        ghat = gN / T[:, None] - (N / T ** 2)[:, None] * gT

        F = float(np.mean(N / T))
        gout = np.zeros(self.n_dof)
        mask = self.dofmap >= 0
        np.add.at(gout.reshape(-1, d), self.dofmap[mask],
                  ghat.reshape(E, K, d)[mask])
        gout /= E
        if not with_hess:
            return F, gout

        # Hessian of N_e/T_e: outer-product coefficients over (u, v) plus
        # curvature of f and sigma; the 1/T_e scale and the -(N/T^2) H_T
        # term are folded into the per-point coefficients.
        fh2 = m2 * eta * (m2 * R + sig) / (R * R * R)
        over_T = (1.0 / T)[:, None]
        alpha = wq * (2.0 * absP * a_eta * a_eta) * over_T
        beta = wq * (4.0 * absP * a_eta * b_eta + 2.0 * eta * sgn * DI * a_eta) * over_T
        gamma = wq * (2.0 * absP * b_eta * b_eta + 2.0 * absP * eta * fh2
                      + 4.0 * eta * b_eta * sgn * DI) * over_T
        kf = wq * (2.0 * absP * eta * a_eta) * over_T
        ksigT = np.where(floored[:, None], 0.0, sgn * DI)
        ksig = wq * ((2.0 * absP * eta * b_eta + eta * eta * sgn * DI) * over_T
                     - (N / (T * T))[:, None] * ksigT)

        Ut = np.swapaxes(U, 1, 2)
        HN = np.matmul(Ut, alpha[..., None] * U)
        HB = np.matmul(Ut, beta[..., None] * V)
        HN += HB
        HN += np.swapaxes(HB, 1, 2)
        HN += np.matmul(np.swapaxes(V, 1, 2), gamma[..., None] * V)

        # curvature of f: 2 kron(sum_q kf g g^T, I_d)
        kff = np.repeat(kf, d, axis=1)                      # (E, nq*d)
        Gf = 2.0 * np.matmul(self.g_fold * kff[:, None, :],
                             np.swapaxes(self.g_fold, 1, 2))
        HN5 = HN.reshape(E, K, d, K, d)
        for c in range(d):
            HN5[:, :, c, :, c] += Gf

        _add_sigma_curvature(self, J, ksig, HN5)

        # rank-two quotient-rule corrections (batched), then scatter
        T2 = (T * T)[:, None, None]
        cross = gN[:, :, None] * gT[:, None, :]
        HN -= (cross + np.swapaxes(cross, 1, 2)) / T2
        HN += (2.0 * N[:, None, None] / (T2 * T[:, None, None])) * \
            (gT[:, :, None] * gT[:, None, :])
        Hout = np.zeros((self.n_dof, self.n_dof))
        for e in range(E):
            ixc, ixr = self._esel[e]
            if len(ixc[0]) == 0:
                continue
            Hout[ixc] += HN[e][ixr]
        Hout /= E
        return F, gout, Hout


def _cofactor(J: np.ndarray) -> np.ndarray:
    """Cofactor matrix C with dsigma = sum C_ab dJ_ab."""
    if J.shape[-1] == 2:
        C = np.empty_like(J)
        C[..., 0, 0] = J[..., 1, 1]
        C[..., 0, 1] = -J[..., 1, 0]
        C[..., 1, 0] = -J[..., 0, 1]
        C[..., 1, 1] = J[..., 0, 0]
        return C
    C = np.empty_like(J)
    for a in range(3):
        for b in range(3):
            i1, i2 = [i for i in range(3) if i != a]
            j1, j2 = [j for j in range(3) if j != b]
            C[..., a, b] = (-1.0) ** (a + b) * (
                J[..., i1, j1] * J[..., i2, j2]
                - J[..., i1, j2] * J[..., i2, j1])
    return C


def _add_sigma_curvature(obj: PatchObjective, J: np.ndarray, coef: np.ndarray,
                         out5: np.ndarray) -> None:
    """Add sum_q coef_q * Hessian of det(J) into out5 (E, K, d, K, d)."""
    E, nq = J.shape[:2]
    K = obj.lelems.shape[1]
    d = obj.d
    g = obj.g
    if d == 2:
        g0w = g[..., 0] * coef[..., None]
        g1w = g[..., 1] * coef[..., None]
        S = np.matmul(np.swapaxes(g0w, 1, 2), g[..., 1]) \
            - np.matmul(np.swapaxes(g1w, 1, 2), g[..., 0])
        out5[:, :, 0, :, 1] += S
        out5[:, :, 1, :, 0] -= S
        return
    # M[e,q,a,c,dd] = coef * sum_b J[a,b] eps[b,c,dd]
    M = np.zeros((E, nq, 3, 3, 3))
    for b, c, dd, sgn in ((0, 1, 2, 1.0), (1, 2, 0, 1.0), (2, 0, 1, 1.0),
                          (0, 2, 1, -1.0), (2, 1, 0, -1.0), (1, 0, 2, -1.0)):
        M[:, :, :, c, dd] += sgn * J[:, :, :, b]
    M *= coef[:, :, None, None, None]
    P = np.matmul(M.reshape(E, nq, 9, 3), obj.gT_static)   # (E, nq, 9, K)
    P = P.reshape(E, nq, 3, 3, K)
    eps_pairs = {0: ((1, 2), (2, 1)), 1: ((2, 0), (0, 2)), 2: ((0, 1), (1, 0))}
    for a in range(3):
        Pa = np.ascontiguousarray(P[:, :, a]).reshape(E, nq * 3, K)
        W3a = np.matmul(obj.g_fold, Pa)                    # (E, K, K)
        (cp, fp), (cm, fm) = eps_pairs[a]
        out5[:, :, cp, :, fp] += W3a
        out5[:, :, cm, :, fm] -= W3a


def patch_objective(patch: ElementPatch, free_coords,
                    config: DistortionConfig | None = None, deltas=None):
    """Objective value, gradient and Hessian at the given free coordinates.

    The working-set delta policy is applied at the current mesh state and
    held fixed for differentiation.
    """
    mesh = patch.mesh
    config = config if config is not None else DistortionConfig()
    if deltas is None:
        deltas = working_set_deltas(mesh, patch.element_ids, config)
    obj = PatchObjective(mesh, patch, config, deltas)
    x = np.asarray(free_coords, dtype=float).ravel()
    if x.size != obj.n_dof:
        raise ValueError(f"free_coords has {x.size} entries, expected {obj.n_dof}")
    return obj.value_grad(x, with_hess=True)


@dataclass
class NewtonResult:
    x: np.ndarray
    status: str
    iterations: int
    value: float
    moved: float


def _newton(obj: PatchObjective, config: SmoothConfig,
            stop_when=None) -> NewtonResult:
    x = obj.x0()
    href = max(obj.edge_scale, 1e-300)
    moved_total = 0.0
    F = obj.value(x)
    if not np.isfinite(F):
        return NewtonResult(x, "invalid_start", 0, F, 0.0)
    for it in range(config.max_newton_iters):
        if stop_when is not None and stop_when(x):
            return NewtonResult(x, "target_met", it, F, moved_total)
        F, g, H = obj.value_grad(x, with_hess=True)
        gnorm = np.abs(g).max() if g.size else 0.0
        if gnorm <= config.grad_tol * max(1.0, abs(F)):
            return NewtonResult(x, "converged_gradient", it, F, moved_total)
        step = _descent_direction(H, g)
        gdotp = float(g @ step)
        t = 1.0
        ok = False
        for _ in range(config.max_halvings):
            Ft = obj.value(x + t * step)
            if Ft <= F + config.armijo * t * gdotp:
                ok = True
                break
            t *= config.shrink
        if not ok:
            return NewtonResult(x, "no_progress", it, F, moved_total)
        dx = t * step
        x = x + dx
        F = Ft
        move = float(np.linalg.norm(dx.reshape(-1, obj.d), axis=1).max())
        moved_total = max(moved_total, move)
        if move < config.step_tol * href:
            return NewtonResult(x, "converged_step", it + 1, F, moved_total)
    return NewtonResult(x, "max_iters", config.max_newton_iters, F, moved_total)


def _descent_direction(H: np.ndarray, g: np.ndarray) -> np.ndarray:
    """Newton direction with diagonal shifts until it points downhill."""
    n = g.size
    hnorm = np.abs(H).max() if n else 0.0
    tau = 0.0
    for _ in range(60):
        try:
            step = np.linalg.solve(H + tau * np.eye(n), -g)
        except np.linalg.LinAlgError:
            step = None
        if step is not None and np.all(np.isfinite(step)) and g @ step < 0.0:
            return step
        tau = max(2.0 * tau, 1e-8 * max(hnorm, 1.0))
    return -g


def newton_with_backtracking(patch: ElementPatch, config: SmoothConfig | None = None,
                             distortion: DistortionConfig | None = None,
                             deltas=None):
    """Minimize the patch objective; returns (free_coords, status).

    The mesh is not modified; callers decide whether to commit.
    """
    config = config if config is not None else SmoothConfig()
    distortion = distortion if distortion is not None else DistortionConfig()
    mesh = patch.mesh
    if deltas is None:
        deltas = working_set_deltas(mesh, patch.element_ids, distortion)
    obj = PatchObjective(mesh, patch, distortion, deltas)
    res = _newton(obj, config)
    return res.x, res.status


def smooth_patch(mesh: HighOrderMesh, patch: ElementPatch,
                 config: SmoothConfig | None = None,
                 distortion: DistortionConfig | None = None) -> PatchSmoothReport:
    """Two-phase untangle-then-smooth of one patch, applied in place.

    Phase one (only when invalid elements exist) minimizes the regularized
    objective until the patch is valid or progress stalls; phase two
    re-minimizes with delta = 0.  Frozen nodes are never written.
    """
    config = config if config is not None else SmoothConfig()
    distortion = distortion if distortion is not None else DistortionConfig()
    eids = patch.element_ids
    _, _, valid0 = batch_distortion(mesh, distortion, eids)
    before = _patch_agg(mesh, eids, distortion)

    if patch.free_nodes.size == 0:
        return PatchSmoothReport(before, before, bool(valid0.all()), 0, 0.0)

    iters = 0
    moved = 0.0
    if not valid0.all() or distortion.delta_mode == "heuristic":
        it1, mv1 = _untangle_phase(mesh, patch, config, distortion)
        iters += it1
        moved = max(moved, mv1)

    _, _, valid1 = batch_distortion(mesh, distortion, eids)
    untangled = bool(valid1.all())
    if untangled and distortion.delta_mode == "zero_if_valid":
        obj = PatchObjective(mesh, patch, distortion, np.zeros(len(eids)))
        res = _newton(obj, config)
        if np.isfinite(res.value):
            obj.commit(res.x)
            iters += res.iterations
            moved = max(moved, res.moved)

    _, _, valid2 = batch_distortion(mesh, distortion, eids)
    after = _patch_agg(mesh, eids, distortion)
    return PatchSmoothReport(before, after, bool(valid2.all()), iters, moved)


def _untangle_phase(mesh, patch, config: SmoothConfig,
                    distortion: DistortionConfig):
    """Regularized minimization rounds until the patch is valid or stalled.

    The per-element delta heuristic is held fixed within a round; stalled
    rounds anneal it down, keeping the best state seen (by worst Jacobian)."""
    eids = patch.element_ids
    deltas = working_set_deltas(mesh, eids, distortion)
    if np.all(deltas == 0.0):
        deltas = np.maximum(deltas, 1e-8)
    _, ms0, _ = batch_distortion(mesh, distortion, eids)
    best_ms = float(ms0.min())
    best_snap = mesh.nodes[patch.free_nodes].copy()
    iters = 0
    moved = 0.0
    scale = 1.0
    for _ in range(config.max_untangle_rounds):
        obj = PatchObjective(mesh, patch, distortion, deltas * scale)
        status = None
        for _ in range(3):
            res = _newton(obj, config, stop_when=lambda x: obj.min_sigma(x) > 0.0)
            obj.commit(res.x)
            iters += res.iterations
            moved = max(moved, res.moved)
            status = res.status
            if status != "max_iters" or obj.min_sigma(res.x) > 0.0:
                break
        ms = obj.min_sigma(res.x)
        if ms > 0.0:
            return iters, moved
        if ms > best_ms:
            best_ms = ms
            best_snap = mesh.nodes[patch.free_nodes].copy()
        else:
            mesh.nodes[patch.free_nodes] = best_snap
            if status != "max_iters":
                if scale < 1e-3:
                    break
        scale *= 0.25
    mesh.nodes[patch.free_nodes] = best_snap
    return iters, moved


def _patch_agg(mesh, eids, distortion) -> float:
    eta, _, valid = batch_distortion(mesh, distortion, eids)
    if valid.all():
        return float(np.mean(eta ** 2))
    return np.inf


@dataclass
class MeshSmoothReport:
    sweeps: int
    eta_agg_before: float
    eta_agg_after: float
    invalid_before: int
    invalid_after: int
    moved: float


def smooth_mesh(mesh: HighOrderMesh, config: SmoothConfig | None = None,
                distortion: DistortionConfig | None = None) -> MeshSmoothReport:
    """Gauss-Seidel sweeps of patch smoothing over vertices in id order."""
    config = config if config is not None else SmoothConfig()
    distortion = distortion if distortion is not None else DistortionConfig()
    agg0, inv0 = _mesh_state(mesh, distortion)
    agg_prev = agg0
    total_moved = 0.0
    sweeps = 0
    for sweeps in range(1, config.max_sweeps + 1):
        topo = MeshTopology(mesh)
        href = _mesh_edge_scale(mesh)
        moved = 0.0
        for vid in mesh.vertex_ids():
            patch = patch_around_vertex(mesh, int(vid), topo)
            if patch.free_nodes.size == 0:
                continue
            rep = smooth_patch(mesh, patch, config, distortion)
            moved = max(moved, rep.moved)
        total_moved = max(total_moved, moved)
        agg_now, _ = _mesh_state(mesh, distortion)
        if moved < config.sweep_move_tol * href:
            break
        if np.isfinite(agg_prev) and np.isfinite(agg_now) and \
                agg_prev - agg_now < config.sweep_improve_tol * max(1.0, agg_prev):
            break
        agg_prev = agg_now
    agg1, inv1 = _mesh_state(mesh, distortion)
    return MeshSmoothReport(sweeps, agg0, agg1, inv0, inv1, total_moved)


def _mesh_state(mesh, distortion):
    if mesh.num_elements == 0:
        return 0.0, 0
    eta, _, valid = batch_distortion(mesh, distortion)
    inv = int((~valid).sum())
    agg = float(np.mean(eta ** 2)) if valid.all() else np.inf
    return agg, inv


def _mesh_edge_scale(mesh) -> float:
    nv = mesh.dim + 1
    verts = mesh.nodes[mesh.elements[:, :nv]]
    diffs = verts[:, 1:, :] - verts[:, :1, :]
    return float(np.linalg.norm(diffs, axis=2).mean()) or 1.0
