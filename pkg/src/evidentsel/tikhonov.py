"""Tikhonov solves ``(A^T A + lam T^T T) u = A^T b`` by conjugate gradients.

``H`` is never formed; each CG step costs one application of ``A``, ``A^T``,
``T`` and ``T^T``. Several right-hand sides may be passed as columns of a
block and are iterated together (independent CG recurrences sharing the
operator applications).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .operators import LinearOperator


@dataclass
class CGConfig:
    rel_tol: float = 1e-8
    max_iter: Optional[int] = None  # None -> 2n
    warm_start: Optional[np.ndarray] = None

    def __post_init__(self):
        if not 0 < self.rel_tol < 1:
            raise ValueError("rel_tol must lie in (0, 1)")
        if self.max_iter is not None and self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")


@dataclass
class SolveResult:
    u: np.ndarray
    iterations: int
    final_residual: float | np.ndarray
    converged: bool


GRAM_DENSE_MAX = 4096  # cache A^T A for explicit dense matrices up to this width


def explicit_gram(op: LinearOperator):
    """Cached ``A^T A`` for small dense matrices and sparse regularizers, else None.

    Forming it once replaces two products per matvec by one; operators
    whose Gram would fill in (the Radon matrix) are left matrix-free.
    """
    G = op.meta.get("_gram")
    if G is not None:
        return G
    M = op.meta.get("matrix")
    if M is None:
        return None
    if op.kind == "dense" and op.shape[1] <= GRAM_DENSE_MAX:
        G = M.conj().T @ M
    elif "order" in op.meta:
        G = (M.T @ M).tocsr()
    else:
        return None
    op.meta["_gram"] = G
    return G


def normal_operator(A: LinearOperator, T: Optional[LinearOperator], lam: float) -> Callable:
    """Matvec for ``H = A^T A + lam T^T T``; ``T=None`` drops the penalty.

    ``H`` itself is never formed; each Gram term is applied separately.
    """
    GA = explicit_gram(A)
    GT = explicit_gram(T) if T is not None and lam != 0 else None

    def H(x):
        out = GA @ x if GA is not None else A.adjoint(A.apply(x))
        if T is not None and lam != 0:
            out = out + lam * (GT @ x if GT is not None else T.adjoint(T.apply(x)))
        return out

    return H


def _dot(a, b):
    return np.sum(np.conj(a) * b, axis=0).real


def cg(matvec: Callable, rhs: np.ndarray, x0=None, rel_tol: float = 1e-8,
       max_iter: Optional[int] = None, callback: Optional[Callable] = None):
    """Conjugate gradients for a Hermitian positive (semi)definite ``matvec``.

    ``rhs`` may be ``(n,)`` or ``(n, k)``; columns stop updating once their
    residual drops below ``rel_tol * ||rhs_col||``.

    Returns
    -------
    x, iterations, residual_norms, converged
    """
    b = np.asarray(rhs)
    squeeze = b.ndim == 1
    if squeeze:
        b = b[:, None]
    n = b.shape[0]
    max_iter = 2 * n if max_iter is None else max_iter
    dtype = np.result_type(b, float)
    x = np.zeros(b.shape, dtype=dtype) if x0 is None else np.array(x0, dtype=dtype).reshape(b.shape)

    bnorm = np.sqrt(_dot(b, b))
    target = rel_tol * bnorm
    it = 0
    r = b - matvec(x) if x0 is not None else b.astype(dtype, copy=True)
    for _restart in range(4):
        rr = _dot(r, r)
        active = np.sqrt(rr) > target
        p = r.copy()
        while active.any() and it < max_iter:
            idx = np.flatnonzero(active)
            # plain slices avoid fancy-index copies while every column is live
            cols = slice(None) if idx.size == active.size else idx
            pa = p[:, cols]
            Ap = matvec(pa)
            pAp = _dot(pa, Ap)
            bad = pAp <= 0
            alpha = np.where(bad, 0.0, rr[cols] / np.where(bad, 1.0, pAp))
            x[:, cols] += alpha * pa
            r[:, cols] -= alpha * Ap
            rr_new = _dot(r[:, cols], r[:, cols])
            beta = rr_new / np.where(rr[cols] > 0, rr[cols], 1.0)
            p[:, cols] = r[:, cols] + beta * pa
            rr[cols] = rr_new
            it += 1
            done = (np.sqrt(rr_new) <= target[cols]) | bad
            active[idx[done]] = False
            if callback is not None:
                callback(x[:, 0] if squeeze else x)
        # the recurrence residual drifts from the true one; restart if needed
        r = b - matvec(x)
        res = np.sqrt(_dot(r, r))
        converged = bool(np.all(res <= target))
        if converged or it >= max_iter:
            break
    if squeeze:
        return x[:, 0], it, float(res[0]), converged
    return x, it, res, converged


def solve_cg(A: LinearOperator, T: Optional[LinearOperator], b, lam: float,
             cfg: Optional[CGConfig] = None, callback: Optional[Callable] = None) -> SolveResult:
    """Minimize ``||A u - b||^2 + lam ||T u||^2`` with CG on the normal equations.

    Non-convergence within ``cfg.max_iter`` is reported in the result, not
    raised.
    """
    if lam < 0:
        raise ValueError("lam must be nonnegative")
    cfg = cfg or CGConfig()
    rhs = A.adjoint(np.asarray(b))
    x, it, res, ok = cg(normal_operator(A, T, lam), rhs, x0=cfg.warm_start,
                        rel_tol=cfg.rel_tol, max_iter=cfg.max_iter, callback=callback)
    return SolveResult(x, it, res, ok)
