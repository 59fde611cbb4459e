"""l1-regularized reconstruction with a parameter mapped from the l2 evidence fit.

Under a Laplacian prior on ``T u`` with variance ``eta^2`` the MAP problem is
``min ||A u - b||^2 + lam1 ||T u||_1`` with ``lam1 = 2^{3/2} sigma^2 / eta``,
so the ``(sigma, eta)`` found for the Gaussian prior carry over directly.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .operators import LinearOperator
from .tikhonov import cg, normal_operator


def map_to_l1(sigma_sq: float, eta: float) -> float:
    """``lam1 = 2^{3/2} sigma^2 / eta`` (note: ``eta`` is a standard deviation)."""
    if not (sigma_sq > 0 and eta > 0):
        raise ValueError("sigma_sq and eta must be positive")
    return 2.0 ** 1.5 * sigma_sq / eta


def shrink(v, t):
    """Soft thresholding ``sign(v) max(|v| - t, 0)``."""
    v = np.asarray(v)
    return np.sign(v) * np.maximum(np.abs(v) - t, 0.0)


@dataclass
class ADMMConfig:
    rho: Optional[float] = None  # None -> lam1 (or 1 when lam1 == 0)
    abs_tol: float = 1e-6
    rel_tol: float = 1e-4
    max_iter: int = 5000
    cg_tol: float = 1e-10
    adaptive: bool = False  # residual balancing: rescale rho when one residual dominates
    balance: float = 10.0

    def __post_init__(self):
        if self.rho is not None and self.rho <= 0:
            raise ValueError("rho must be positive")
        if self.abs_tol <= 0 or self.rel_tol <= 0:
            raise ValueError("tolerances must be positive")


@dataclass
class L1Result:
    u: np.ndarray
    z: np.ndarray
    w: np.ndarray
    rho: float
    primal_residual: list = field(default_factory=list)
    dual_residual: list = field(default_factory=list)
    iterations: int = 0
    converged: bool = False


def l1_objective(A: LinearOperator, T: LinearOperator, b, u, lam1: float) -> float:
    r = A.apply(u) - b
    return float(np.vdot(r, r).real + lam1 * np.abs(T.apply(u)).sum())


def _spectral_u_solver(A: LinearOperator, T: LinearOperator, rho: float):
    """Diagonal solve of ``(2 A^T A + rho T^T T) u = rhs`` when both Grams are DFT-diagonal."""
    if A.gram_eigs is None or T.gram_eigs is None or A.grid is None:
        return None
    if A.grid != T.grid or A.kind == "fourier-mask":
        return None
    grid = A.grid
    d = 2.0 * A.gram_eigs + rho * T.gram_eigs
    inv = np.zeros_like(d)
    np.divide(1.0, d, out=inv, where=d > 0)
    inv = inv.reshape(grid)

    def solve(rhs, _x0):
        out = np.fft.ifftn(inv * np.fft.fftn(rhs.reshape(grid)))
        return out.real.ravel() if np.isrealobj(rhs) else out.ravel()

    return solve


DENSE_FACTOR_MAX = 2048  # factor H once below this size; CG above


def _dense_u_solver(A: LinearOperator, T: LinearOperator, rho: float):
    """Cholesky of ``2 A^T A + rho T^T T``, reused for every ADMM iteration."""
    n = A.shape[1]
    if n > DENSE_FACTOR_MAX or A.kind not in ("dense", "sparse"):
        return None
    Ad, Td = A.todense(), T.todense()
    H = 2.0 * (Ad.conj().T @ Ad) + rho * (Td.conj().T @ Td)
    try:
        fac = cho_factor(H)
    except np.linalg.LinAlgError:  # singular (null spaces of A and T meet)
        return None
    return lambda rhs, _x0: cho_solve(fac, rhs)


def solve_l1_admm(A: LinearOperator, T: LinearOperator, b, lam1: float,
                  cfg: Optional[ADMMConfig] = None, u0=None) -> L1Result:
    """Minimize ``||A u - b||^2 + lam1 ||T u||_1`` by ADMM on the split ``z = T u``.

    The u-update is a diagonal DFT solve when ``A`` and ``T`` are both
    circulant on the same grid, a cached Cholesky solve for small explicit
    matrices and warm-started CG otherwise. Stopping uses the usual
    primal/dual residual tests; with ``cfg.adaptive`` the penalty ``rho`` is
    doubled or halved every 10 iterations while one residual exceeds the
    other by ``cfg.balance``. ``lam1 == 0`` is solved as plain least squares.
    """
    if lam1 < 0:
        raise ValueError("lam1 must be nonnegative")
    cfg = cfg or ADMMConfig()
    rho = cfg.rho if cfg.rho is not None else (lam1 if lam1 > 0 else 1.0)
    b = np.asarray(b)
    n = A.shape[1]
    p = T.shape[0]
    Atb2 = 2.0 * A.adjoint(b)

    def make_solver(rho):
        solver = _spectral_u_solver(A, T, rho) or _dense_u_solver(A, T, rho)
        if solver is not None:
            return solver

        def H(x):
            return 2.0 * A.adjoint(A.apply(x)) + rho * T.adjoint(T.apply(x))

        return lambda rhs, x0: cg(H, rhs, x0=x0, rel_tol=cfg.cg_tol, max_iter=10 * n)[0]

    if lam1 == 0:
        # no threshold: plain least squares, solved directly rather than by splitting
        x0 = None if u0 is None else np.array(u0, dtype=float)
        u, _, _, ok = cg(normal_operator(A, None, 0.0), A.adjoint(b), x0=x0,
                         rel_tol=cfg.cg_tol, max_iter=10 * n)
        return L1Result(u, T.apply(u), np.zeros(p), rho, converged=ok)

    solver = make_solver(rho)
    u = np.zeros(n) if u0 is None else np.array(u0, dtype=float)
    z = T.apply(u)
    w = np.zeros(p)
    res = L1Result(u, z, w, rho)
    for it in range(1, cfg.max_iter + 1):
        u = solver(Atb2 + rho * T.adjoint(z - w), u)
        Tu = T.apply(u)
        z_old = z
        z = shrink(Tu + w, lam1 / rho)
        w = w + Tu - z
        r_norm = float(np.linalg.norm(Tu - z))
        s_norm = float(rho * np.linalg.norm(T.adjoint(z - z_old)))
        res.primal_residual.append(r_norm)
        res.dual_residual.append(s_norm)
        eps_pri = math.sqrt(p) * cfg.abs_tol + cfg.rel_tol * max(np.linalg.norm(Tu), np.linalg.norm(z))
        eps_dual = math.sqrt(n) * cfg.abs_tol + cfg.rel_tol * rho * np.linalg.norm(T.adjoint(w))
        if r_norm <= eps_pri and s_norm <= eps_dual:
            res.converged = True
            break
        if cfg.adaptive and it % 10 == 0:
            # w is scaled by 1/rho, so it is rescaled along with rho
            if r_norm > cfg.balance * s_norm:
                rho, w = 2.0 * rho, w / 2.0
                solver = make_solver(rho)
            elif s_norm > cfg.balance * r_norm:
                rho, w = rho / 2.0, 2.0 * w
                solver = make_solver(rho)
    res.rho = rho
    res.u, res.z, res.w, res.iterations = u, z, w, it
    return res


def optimality_residual(A: LinearOperator, T: LinearOperator, b, lam1: float, result: L1Result) -> float:
    """``min_g ||2 A^T (A u - b) + lam1 T^T g||`` over a subgradient ``g`` of ``||z||_1``.

    ``g = sign(z)`` where ``z != 0``; inside the threshold band the scaled dual
    ``rho w / lam1`` (clipped to ``[-1, 1]``) supplies the subgradient.
    """
    grad = 2.0 * A.adjoint(A.apply(result.u) - b)
    if lam1 == 0:
        return float(np.linalg.norm(grad))
    g = np.clip(result.rho * result.w / lam1, -1.0, 1.0)
    nz = result.z != 0
    g[nz] = np.sign(result.z[nz])
    return float(np.linalg.norm(grad + lam1 * T.adjoint(g)))
