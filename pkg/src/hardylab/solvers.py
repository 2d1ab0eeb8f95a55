"""Ground-state and p-harmonic solvers on the free nodes of a mesh.

* ``ground_state_p2``: lowest generalized eigenpair of (stiffness, singular
  mass) through a sparse LU of the stiffness and ARPACK shift-invert Lanczos
  (inverse iteration with Krylov acceleration).
* ``ground_state``: for p != 2, nonlinear inverse iteration on the Rayleigh
  quotient, preconditioned by the lagged-diffusivity (Kacanov) stiffness,
  with a backtracking line search.
* ``p_harmonic_extension``: minimizes the p-energy with Dirichlet data
  (direct solve for p=2, damped Newton otherwise).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import LinearOperator, eigsh, splu

from .discretization import KAPPA, Mesh, NodeKind

__all__ = [
    "SolverError",
    "EigenResult",
    "ground_state_p2",
    "ground_state",
    "p_harmonic_extension",
    "el_residual",
]


class SolverError(RuntimeError):
    """Iteration budget exhausted; carries the residual history."""

    def __init__(self, message, history=None):
        super().__init__(message)
        self.history = list(history or [])


@dataclass
class EigenResult:
    value: float
    vector: np.ndarray          # full nodal vector, zero on Dirichlet nodes
    iterations: int
    residual: float             # relative Euler-Lagrange residual
    converged: bool
    history: list = field(default_factory=list)


def _free_ops(mesh: Mesh):
    fr = mesh.free
    return [op[:, fr].tocsr() for op in mesh.grad_ops], fr


def _phi(u, p):
    return np.abs(u) ** (p - 1.0) * np.sign(u)


def _energy_terms(ops, meas, u, p, kappa):
    g = np.stack([op @ u for op in ops], axis=1)
    g2 = np.sum(g * g, axis=1)
    if p < 2.0:
        gn_p = (g2 + kappa * kappa) ** (p / 2.0) - kappa ** p
        wgt = (g2 + kappa * kappa) ** ((p - 2.0) / 2.0)
    else:
        gn_p = g2 ** (p / 2.0)
        wgt = g2 ** ((p - 2.0) / 2.0) if p != 2.0 else np.ones_like(g2)
    energy = float(np.sum(meas * gn_p))
    flux = (meas * wgt)[:, None] * g
    gradient = sum(op.T @ flux[:, k] for k, op in enumerate(ops))  # d(energy/p)/du
    return energy, gradient, g2


def _kacanov(ops, meas, g2, p, floor):
    """Lagged-diffusivity stiffness sum m_e w_e D^T D with a positive weight floor."""
    if p == 2.0:
        wgt = np.ones_like(g2)
    else:
        wgt = (g2 + floor * floor) ** ((p - 2.0) / 2.0)
    W = sp.diags(meas * wgt)
    return sum(op.T @ W @ op for op in ops).tocsc()


def el_residual(mesh: Mesh, u_free, lam, weights_free, p, kappa=KAPPA, mask=None) -> float:
    """Relative Euler-Lagrange residual of -Delta_p u = lam w |u|^(p-2) u / A.

    Nodal residuals are divided by the lumped measure (so they are point
    values of the strong form) and compared in the measure-weighted l2 norm;
    ``mask`` restricts the comparison (e.g. away from the eps-strip).
    """
    ops, fr = _free_ops(mesh)
    _, gE, _ = _energy_terms(ops, mesh.elem_measure, u_free, p, kappa)
    A = mesh.node_measure[fr]
    rhs = lam * weights_free * _phi(u_free, p)
    r = (gE - rhs) / A
    ref = rhs / A
    if mask is not None:
        r, ref, A = r[mask], ref[mask], A[mask]
    den = np.sqrt(np.sum(A * ref * ref))
    if den == 0:
        return float("inf")
    return float(np.sqrt(np.sum(A * r * r)) / den)


def _expand(mesh, uf):
    u = np.zeros(mesh.num_nodes)
    u[mesh.free] = uf
    return u


def _normalize_sign(u):
    # positive ground state: make the dominant sign positive, unit max
    s = np.sign(u[np.argmax(np.abs(u))])
    return s * u / np.max(np.abs(u))


def _splu(A):
    # symmetric fill-reducing ordering: about half the fill of COLAMD on these stiffness matrices
    return splu(A, permc_spec="MMD_AT_PLUS_A")


def ground_state_p2(mesh: Mesh, weights: np.ndarray, *, tol: float = 1e-8, lu=None,
                    num_vectors: int = 1, v0: np.ndarray | None = None) -> EigenResult:
    """Lowest eigenpair of K u = lam diag(weights) u on the free nodes.

    ``weights`` is the full nodal weight vector; ``lu`` may carry a reused
    factorization of the free stiffness block (it does not depend on weights);
    otherwise one is cached on the mesh.  ``v0`` (a full nodal vector, e.g.
    the previous rung of a ladder) warm-starts the Lanczos iteration.
    """
    fr = mesh.free
    nf = int(fr.sum())
    K = _stiffness_free(mesh)
    w = weights[fr]
    if lu is None:
        lu = mesh.info.get("_stiffness_lu")
        if lu is None:
            lu = _splu(K)
            mesh.info["_stiffness_lu"] = lu
    if nf <= 3:
        raise SolverError("too few free nodes for an eigen solve")
    op = LinearOperator((nf, nf), matvec=lu.solve, dtype=float)
    k = min(num_vectors, nf - 2)
    start = np.ones(nf) if v0 is None else np.abs(v0[fr]) + 1e-3 * np.max(np.abs(v0[fr]))
    vals, vecs = eigsh(K, k=k, M=sp.diags(w).tocsc(), sigma=0.0, which="LM", OPinv=op,
                       tol=min(tol, 1e-10), v0=start, ncv=min(nf - 1, max(2 * k + 1, 10)))
    i = int(np.argmin(vals))
    lam = float(vals[i])
    uf = _normalize_sign(vecs[:, i])
    res = el_residual(mesh, uf, lam, w, 2.0)
    return EigenResult(lam, _expand(mesh, uf), 1, res, True, [lam])


def _stiffness_free(mesh: Mesh):
    cached = mesh.info.get("_stiffness_free")
    if cached is not None:
        return cached
    ops, _ = _free_ops(mesh)
    W = sp.diags(mesh.elem_measure)
    K = sum(op.T @ W @ op for op in ops).tocsc()
    mesh.info["_stiffness_free"] = K
    return K


def ground_state(mesh: Mesh, p: float, weights: np.ndarray, *, u0: np.ndarray | None = None,
                 kappa: float = KAPPA, max_iter: int = 3000, stall_window: int = 50,
                 stall_tol: float = 1e-9, el_tol: float = 1e-7, lu=None) -> EigenResult:
    """Minimize sum m_e |grad u|^p / sum w_i |u_i|^p over the free nodes.

    Starts from ``u0`` (default: the p=2 ground state).  Each step solves
    the lagged-diffusivity system for the preconditioned quotient gradient and
    backtracks until the quotient decreases.  Stops when the relative
    Euler-Lagrange residual is below ``el_tol`` or the quotient dropped by less
    than ``stall_tol`` (relative) over ``stall_window`` steps.
    """
    if p == 2.0:
        return ground_state_p2(mesh, weights, lu=lu, v0=u0)
    ops, fr = _free_ops(mesh)
    meas = mesh.elem_measure
    w = weights[fr]
    if u0 is None:
        u0 = ground_state_p2(mesh, weights, lu=lu).vector
    u = np.abs(u0[fr]).astype(float)
    if not np.any(u > 0):
        raise SolverError("initial guess vanishes")

    def quotient(v):
        E, gE, g2 = _energy_terms(ops, meas, v, p, kappa)
        N = float(np.sum(w * np.abs(v) ** p))
        return E / N, E, N, gE, g2

    lam, E, N, gE, g2 = quotient(u)
    u = u / N ** (1.0 / p)
    lam, E, N, gE, g2 = quotient(u)
    history = [lam]
    res = np.inf
    it = 0
    converged = False
    for it in range(1, max_iter + 1):
        gscale = np.sqrt(np.max(g2)) if np.max(g2) > 0 else 1.0
        floor = kappa if p < 2.0 else 1e-3 * gscale
        P = _kacanov(ops, meas, g2, p, floor)
        r = lam * w * _phi(u, p) - gE
        # the energy Hessian is (p-1) times the lagged stiffness; damping the
        # step by it helps for p > 2 but overshoots for p < 2
        s = _splu(P).solve(r) / max(p - 1.0, 1.0)
        t = 1.0
        accepted = False
        for _ in range(40):
            v = u + t * s
            lv = quotient(v)[0]
            if lv < lam:
                accepted = True
                break
            t *= 0.5
        if not accepted:
            converged = True
            break
        u = np.abs(v)
        lam, E, N, gE, g2 = quotient(u)
        u = u / N ** (1.0 / p)
        lam, E, N, gE, g2 = quotient(u)
        history.append(lam)
        res = el_residual(mesh, u, lam, w, p, kappa)
        if res < el_tol:
            converged = True
            break
        if len(history) > stall_window and history[-stall_window - 1] - lam < stall_tol * lam:
            converged = True
            break
    res = el_residual(mesh, u, lam, w, p, kappa)
    uf = _normalize_sign(u)
    return EigenResult(lam, _expand(mesh, uf), it, res, converged, history)


def p_harmonic_extension(mesh: Mesh, p: float, boundary_values: np.ndarray, *,
                         u0: np.ndarray | None = None, kappa: float = KAPPA,
                         tol: float = 1e-6, max_iter: int = 200) -> tuple[np.ndarray, list]:
    """Minimize the p-energy with prescribed values on non-free nodes.

    Returns the full nodal vector and the residual history, the residual
    being the max-norm of the discrete p-Laplacian over free nodes.  For
    p=2 this is one sparse solve; otherwise damped Newton with an Armijo
    line search on the energy.
    """
    fr = mesh.free
    full_ops = mesh.grad_ops
    meas = mesh.elem_measure
    A = mesh.node_measure[fr]
    u = np.array(boundary_values, dtype=float)
    if u0 is not None:
        u[fr] = u0[fr]
    ops = [op[:, fr].tocsr() for op in full_ops]
    fixed = [op[:, ~fr].tocsr() for op in full_ops]
    ub = u[~fr]
    offset = np.stack([op @ ub for op in fixed], axis=1)

    def terms(uf):
        g = np.stack([op @ uf for op in ops], axis=1) + offset
        g2 = np.sum(g * g, axis=1)
        if p < 2.0:
            e = (g2 + kappa * kappa) ** (p / 2.0)
            wgt = (g2 + kappa * kappa) ** ((p - 2.0) / 2.0)
        else:
            e = g2 ** (p / 2.0)
            wgt = np.ones_like(g2) if p == 2.0 else g2 ** ((p - 2.0) / 2.0)
        flux = (meas * wgt)[:, None] * g
        gr = sum(op.T @ flux[:, k] for k, op in enumerate(ops))
        return float(np.sum(meas * e)) / p, gr, g, g2, wgt

    uf = u[fr]
    history = []
    for it in range(max_iter + 1):
        E, gr, g, g2, wgt = terms(uf)
        res = float(np.max(np.abs(gr / A)))
        history.append(res)
        if res <= tol:
            break
        if it == max_iter:
            raise SolverError(f"p-harmonic solve did not converge (residual {res:.3e})", history)
        # Newton Hessian of energy/p: sum m_e w_e (I + (p-2) g g^T/(|g|^2 + kappa^2)) per element
        corr = (p - 2.0) / (g2 + kappa * kappa)
        H = None
        for i, oi in enumerate(ops):
            for j, oj in enumerate(ops):
                coef = meas * wgt * ((1.0 if i == j else 0.0) + corr * g[:, i] * g[:, j])
                term = oi.T @ sp.diags(coef) @ oj
                H = term if H is None else H + term
        step = _splu(H.tocsc()).solve(-gr)
        t = 1.0
        slope = float(gr @ step)
        while t > 1e-10:
            En = terms(uf + t * step)[0]
            if En <= E + 1e-4 * t * slope:
                break
            t *= 0.5
        uf = uf + t * step
    u[fr] = uf
    return u, history
