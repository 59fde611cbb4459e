"""Maximum-evidence selection of the Tikhonov parameter.

The noise variance ``sigma^2`` and signal variance ``eta^2`` that maximize
``p(b | sigma, eta)`` satisfy the coupled conditions::

    sigma^2 = ||A u_lam - b||^2 / (m - trace(H^{-1} A^T A))
    eta^2   = ||T u_lam||^2     / (n - lam trace(H^{-1} T^T T))

with ``lam = sigma^2 / eta^2`` and ``H = A^T A + lam T^T T``. Both
:func:`me_iterate_general` (CG solves plus Hutchinson trace estimates) and
:func:`me_iterate_spectral` (exact DFT-domain formulas) iterate these
equations to a fixed point.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .operators import LinearOperator
from .spectral import SpectralModel, spectral_solve, to_spatial, transform_data
from .tikhonov import CGConfig, cg, normal_operator

STOP_REASONS = ("tol", "max_iter", "divergence")


class DegenerateIteration(ArithmeticError):
    """A variance update hit a nonpositive denominator or a zero norm."""


@dataclass(frozen=True)
class MEState:
    sigma_sq: float
    eta_sq: float
    lam: float
    k: int = 0


@dataclass
class METrajectory:
    """Sequence of ``(sigma^2, eta^2, lam)`` iterates.

    ``solution_change[k]`` is ``||u_{k+1} - u_k|| / ||u_k||`` so it is one
    shorter than ``states``. ``states[0]`` carries only the starting ``lam``.
    """

    states: list[MEState]
    solution_change: list[float] = field(default_factory=list)
    converged: bool = False
    stop_reason: str = "max_iter"
    u: Optional[np.ndarray] = None
    message: str = ""
    cg_converged: bool = True

    @property
    def lam(self) -> float:
        return self.states[-1].lam

    @property
    def final(self) -> MEState:
        """Last state carrying variance estimates (the starting state has none)."""
        for s in reversed(self.states):
            if not math.isnan(s.sigma_sq):
                return s
        return self.states[-1]

    @property
    def sigma(self) -> float:
        return math.sqrt(self.final.sigma_sq)

    @property
    def eta(self) -> float:
        return math.sqrt(self.final.eta_sq)

    @property
    def iterations(self) -> int:
        return len(self.states) - 1

    def lambdas(self) -> np.ndarray:
        return np.array([s.lam for s in self.states])

    def to_csv(self, fh=None) -> str:
        """Write ``k, sigma_sq, eta_sq, lambda, solution_change`` rows."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\r\n")
        w.writerow(["k", "sigma_sq", "eta_sq", "lambda", "solution_change"])
        for i, s in enumerate(self.states):
            change = "" if i == 0 else repr(self.solution_change[i - 1])
            sig = "" if math.isnan(s.sigma_sq) else repr(s.sigma_sq)
            eta = "" if math.isnan(s.eta_sq) else repr(s.eta_sq)
            w.writerow([s.k, sig, eta, repr(s.lam), change])
        text = buf.getvalue()
        if fh is not None:
            fh.write(text)
        return text


def me_step(misfit: float, regnorm: float, trace_A: float, trace_T: float,
            lam: float, m: int, n: int, k: int = 0) -> MEState:
    """One variance update from a Tikhonov solution at ``lam``.

    Raises
    ------
    DegenerateIteration
        Nonpositive denominators, zero misfit or zero regularization norm.
    """
    den_sigma = m - trace_A
    den_eta = n - lam * trace_T
    if not (den_sigma > 0 and den_eta > 0):
        raise DegenerateIteration(f"nonpositive denominator (m - trA = {den_sigma:g}, "
                                  f"n - lam trT = {den_eta:g})")
    if not misfit > 0:
        raise DegenerateIteration("zero data misfit: sigma^2 collapsed to 0")
    if not regnorm > 0:
        raise DegenerateIteration("zero regularization norm: eta^2 collapsed to 0")
    sigma_sq = misfit / den_sigma
    eta_sq = regnorm / den_eta
    return MEState(sigma_sq, eta_sq, sigma_sq / eta_sq, k)


# -- stochastic traces --------------------------------------------------------


@dataclass(frozen=True)
class ProbeSet:
    """``J`` Gaussian probe columns, orthonormalized and rescaled to norm ``sqrt(n)``."""

    probes: np.ndarray
    seed: Optional[int] = None

    @property
    def J(self) -> int:
        return self.probes.shape[1]


def make_probes(n: int, J: int, seed=None, orthogonalize: bool = True) -> ProbeSet:
    if J < 1:
        raise ValueError("need at least one probe")
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, J))
    if orthogonalize:
        if J > n:
            raise ValueError("cannot orthonormalize more probes than unknowns")
        Q, R = np.linalg.qr(X)
        # fix column signs so the set is a deterministic function of X
        X = Q * np.sign(np.diag(R)) * math.sqrt(n)
    return ProbeSet(X, seed)


def probe_products(A: LinearOperator, T: Optional[LinearOperator], probes: ProbeSet):
    """``(T^T T x_j, A^T A x_j)`` for every probe; computed once per run."""
    X = probes.probes
    z = A.adjoint(A.apply(X))
    y = T.adjoint(T.apply(X)) if T is not None else np.zeros_like(X)
    return y, z


@dataclass
class TraceEstimate:
    trace_A: float
    trace_T: float
    converged: bool
    solutions: np.ndarray  # H^{-1} x_j, reused as warm start


def hutchinson_traces(A: LinearOperator, T: Optional[LinearOperator], lam: float,
                      probes: ProbeSet, cfg: Optional[CGConfig] = None,
                      products=None, x0=None) -> TraceEstimate:
    """Raw estimates of ``trace(H^{-1} A^T A)`` and ``trace(H^{-1} T^T T)``."""
    cfg = cfg or CGConfig()
    y, z = products if products is not None else probe_products(A, T, probes)
    W, _, _, ok = cg(normal_operator(A, T, lam), probes.probes, x0=x0,
                     rel_tol=cfg.rel_tol, max_iter=cfg.max_iter)
    J = probes.J
    tA = float(np.sum(np.conj(W) * z).real) / J
    tT = float(np.sum(np.conj(W) * y).real) / J
    return TraceEstimate(tA, tT, ok, W)


def correct_traces(trace_A: float, trace_T: float, lam: float, n: int) -> tuple[float, float]:
    """Rescale estimates so that ``trace_A + lam * trace_T == n``."""
    total = trace_A + lam * trace_T
    if not total > 0:
        raise DegenerateIteration("nonpositive trace sum")
    return n * trace_A / total, n * trace_T / total


# -- general path -------------------------------------------------------------


@dataclass
class LinearProblem:
    """``b = A u + noise`` with regularizer ``T``."""

    A: LinearOperator
    T: Optional[LinearOperator]
    b: np.ndarray
    truth: Optional[np.ndarray] = None

    @property
    def m(self) -> int:
        return self.A.shape[0]

    @property
    def n(self) -> int:
        return self.A.shape[1]


def _rel_change(new, old) -> float:
    den = np.linalg.norm(old)
    return float(np.linalg.norm(new - old) / den) if den > 0 else math.inf


def _lam_settled(traj: METrajectory, lam_tol: Optional[float]) -> bool:
    if lam_tol is None:
        return True
    if len(traj.states) < 3:
        return False
    new, old = traj.states[-1].lam, traj.states[-2].lam
    return abs(new - old) <= lam_tol * new


def _diverged(state: MEState, lam_ref: float, factor: float, data_scale: float) -> Optional[str]:
    # growth is measured from the first update, not the user's lam0, so a
    # distant starting guess is not mistaken for a runaway
    if not np.isfinite(state.lam):
        return "non-finite lambda"
    if state.lam > factor * lam_ref:
        return f"lambda grew by more than {factor:g}x"
    if state.lam < lam_ref / factor:
        return f"lambda shrank by more than {factor:g}x"
    if state.eta_sq < 1e-300:
        return "eta^2 underflow"
    # a noise level 1e5 below the data is indistinguishable from exact data
    if state.sigma_sq <= 1e-10 * data_scale:
        return "sigma^2 collapsed to 0"
    return None


def me_iterate_general(problem: LinearProblem, lam0: float = 1.0, max_iter: int = 30,
                       tol: float = 1e-4, n_probes: int = 32, seed=None,
                       cg_config: Optional[CGConfig] = None,
                       divergence_factor: float = 1e6,
                       lam_tol: Optional[float] = None) -> METrajectory:
    """Evidence iteration for general operators.

    Each outer step solves for ``u_k`` and the ``J`` probe systems
    ``H_k w_j = x_j`` together (warm-started from the previous step), forms
    Hutchinson estimates of both traces, rescales them to satisfy the exact
    identity ``trace_A + lam trace_T = n`` and updates the variances.
    Stops when the relative solution change drops below ``tol`` and, if
    ``lam_tol`` is given, the relative step in ``lam`` also drops below it.
    """
    if lam0 <= 0:
        raise ValueError("lam0 must be positive")
    if max_iter < 1:
        raise ValueError("max_iter must be >= 1")
    A, T, b = problem.A, problem.T, np.asarray(problem.b)
    m, n = problem.m, problem.n
    cfg = cg_config or CGConfig()
    probes = make_probes(n, n_probes, seed)
    y, z = probe_products(A, T, probes)
    rhs = np.column_stack([A.adjoint(b), probes.probes])
    data_scale = float(np.vdot(b, b).real) / m

    traj = METrajectory([MEState(math.nan, math.nan, lam0, 0)])
    X = None
    u_prev = None
    lam = lam0
    k = 0
    while True:
        sol, _, _, ok = cg(normal_operator(A, T, lam), rhs, x0=X,
                           rel_tol=cfg.rel_tol, max_iter=cfg.max_iter)
        traj.cg_converged &= ok
        X = sol
        u = sol[:, 0]
        if u_prev is not None:
            change = _rel_change(u, u_prev)
            traj.solution_change.append(change)
            if change < tol and _lam_settled(traj, lam_tol):
                traj.converged, traj.stop_reason = True, "tol"
                break
        if k >= max_iter:
            traj.stop_reason = "max_iter"
            break
        W = sol[:, 1:]
        tA = float(np.sum(np.conj(W) * z).real) / probes.J
        tT = float(np.sum(np.conj(W) * y).real) / probes.J
        resid = A.apply(u) - b
        misfit = float(np.vdot(resid, resid).real)
        Tu = T.apply(u) if T is not None else np.zeros(1)
        regnorm = float(np.vdot(Tu, Tu).real)
        try:
            tA2, tT2 = correct_traces(tA, tT, lam, n)
            state = me_step(misfit, regnorm, tA2, tT2, lam, m, n, k + 1)
        except DegenerateIteration as exc:
            traj.stop_reason, traj.message = "divergence", str(exc)
            break
        traj.states.append(state)
        u_prev = u
        k += 1
        lam = state.lam
        why = _diverged(state, traj.states[1].lam, divergence_factor, data_scale)
        if why:
            traj.stop_reason, traj.message = "divergence", why
            break
    traj.u = u
    return traj


# -- spectral path ------------------------------------------------------------


class _SpectralKernel:
    """Per-iteration quantities of the spectral path as O(n) real-array sums.

    With ``d = f + lam t`` and ``u_hat = conj(gamma_C) b_hat / d``::

        ||C u - b||^2 = sum |b_hat|^2 (1 - f/d)^2
        ||T u||^2     = sum t f |b_hat|^2 / d^2
    """

    def __init__(self, model: SpectralModel, b_hat: np.ndarray):
        self.f = np.ascontiguousarray(model.forward_eigs_sq, dtype=float)
        self.t = np.ascontiguousarray(model.reg_eigs_sq, dtype=float)
        bb = np.abs(b_hat) ** 2
        self.bb = bb
        self.fbb = self.f * bb
        self.tfbb = self.t * self.fbb
        self.degenerate = np.any(self.f + self.t == 0)

    def inverse(self, lam):
        d = self.f + lam * self.t
        if self.degenerate:
            inv = np.zeros_like(d)
            np.divide(1.0, d, out=inv, where=d > 0)
            return inv
        return 1.0 / d

    def quantities(self, inv):
        fi = self.f * inv
        trA = float(fi.sum())
        trT = float(np.dot(self.t, inv))
        r = 1.0 - fi
        misfit = float(np.dot(self.bb, r * r))
        inv2 = inv * inv
        reg = float(np.dot(self.tfbb, inv2))
        return misfit, reg, trA, trT

    def change(self, inv_new, inv_old) -> float:
        d = inv_new - inv_old
        num = float(np.dot(self.fbb, d * d))
        den = float(np.dot(self.fbb, inv_old * inv_old))
        return math.sqrt(num / den) if den > 0 else math.inf


def me_update_spectral(model: SpectralModel, b_hat: np.ndarray, lam: float, k: int = 0) -> MEState:
    """One spectral-path update ``lam_k -> (sigma^2, eta^2, lam_{k+1})``."""
    ker = _SpectralKernel(model, np.asarray(b_hat).ravel())
    misfit, reg, trA, trT = ker.quantities(ker.inverse(lam))
    return me_step(misfit, reg, trA, trT, lam, model.m, model.n_total, k)


def me_iterate_spectral(model: SpectralModel, b, lam0: float = 1.0, max_iter: int = 30,
                        tol: float = 1e-4, b_is_hat: bool = False,
                        divergence_factor: float = 1e6,
                        lam_tol: Optional[float] = None) -> METrajectory:
    """Evidence iteration with exact DFT-domain traces and solves.

    ``b`` is transformed once; every iteration is a handful of O(n) array
    reductions and the spatial solution is recovered with a single inverse
    DFT at the end (``traj.u``, shaped like ``model.grid``).

    For Fourier-mask models ``m = |S|`` enters the noise-variance denominator.
    The solution typically moves much less than ``lam`` per step, so pass
    ``lam_tol`` when ``lam`` itself must be settled to a given accuracy.
    """
    if lam0 <= 0:
        raise ValueError("lam0 must be positive")
    if max_iter < 1:
        raise ValueError("max_iter must be >= 1")
    b_hat = np.asarray(b).ravel() if b_is_hat else transform_data(model, b)
    ker = _SpectralKernel(model, b_hat)
    m, n = model.m, model.n_total
    data_scale = float(ker.bb.sum()) / m

    traj = METrajectory([MEState(math.nan, math.nan, lam0, 0)])
    lam = lam0
    inv_prev = None
    k = 0
    while True:
        inv = ker.inverse(lam)
        if inv_prev is not None:
            change = ker.change(inv, inv_prev)
            traj.solution_change.append(change)
            if change < tol and _lam_settled(traj, lam_tol):
                traj.converged, traj.stop_reason = True, "tol"
                break
        if k >= max_iter:
            traj.stop_reason = "max_iter"
            break
        misfit, reg, trA, trT = ker.quantities(inv)
        try:
            state = me_step(misfit, reg, trA, trT, lam, m, n, k + 1)
        except DegenerateIteration as exc:
            traj.stop_reason, traj.message = "divergence", str(exc)
            break
        traj.states.append(state)
        inv_prev = inv
        k += 1
        lam = state.lam
        why = _diverged(state, traj.states[1].lam, divergence_factor, data_scale)
        if why:
            traj.stop_reason, traj.message = "divergence", why
            break
    traj.u = to_spatial(model, spectral_solve(model, b_hat, lam))
    return traj
