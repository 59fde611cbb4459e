"""Unbiased predictive risk estimation (known noise variance) for comparison.

``UPRE(lam) = -m sigma^2 + ||A u_lam - b||^2 + 2 sigma^2 trace(A B_lam)`` with
``B_lam = H^{-1} A^T`` so ``trace(A B_lam) = trace(H^{-1} A^T A)``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from .me_select import LinearProblem, ProbeSet, correct_traces, make_probes, probe_products
from .spectral import SpectralProblem, spectral_norms, spectral_solve, spectral_traces
from .tikhonov import CGConfig, cg, normal_operator

Problem = Union[LinearProblem, SpectralProblem]


@dataclass(frozen=True)
class UPREGrid:
    lambda_min: float = 1e-4
    lambda_max: float = 1e4
    coarse_count: int = 20
    refine_count: int = 20

    def __post_init__(self):
        if not 0 < self.lambda_min < self.lambda_max:
            raise ValueError("need 0 < lambda_min < lambda_max")
        if self.coarse_count < 2 or self.refine_count < 2:
            raise ValueError("grid counts must be >= 2")

    def coarse(self) -> np.ndarray:
        return np.geomspace(self.lambda_min, self.lambda_max, self.coarse_count)

    @property
    def step(self) -> float:
        """Ratio between consecutive coarse points."""
        return (self.lambda_max / self.lambda_min) ** (1.0 / (self.coarse_count - 1))


class _UPREEvaluator:
    """Caches per-problem setup (DFT of the data, probe products)."""

    def __init__(self, problem: Problem, sigma_sq: float, trace_source: Optional[str] = None,
                 n_probes: int = 32, seed=None, cg_config: Optional[CGConfig] = None):
        if not sigma_sq >= 0:
            raise ValueError("sigma_sq must be nonnegative")
        if trace_source is None:
            trace_source = "spectral" if isinstance(problem, SpectralProblem) else "hutchinson"
        if trace_source not in ("spectral", "hutchinson"):
            raise ValueError(f"unknown trace source {trace_source!r}")
        if trace_source == "spectral" and not isinstance(problem, SpectralProblem):
            raise ValueError("spectral traces need a SpectralProblem")
        self.problem = problem
        self.sigma_sq = sigma_sq
        self.source = trace_source
        self.cfg = cg_config or CGConfig()
        if isinstance(problem, SpectralProblem):
            self.b_hat = problem.b_hat
            self.m = problem.model.m
        else:
            self.m = problem.m
            self.probes: ProbeSet = make_probes(problem.n, n_probes, seed)
            self.products = probe_products(problem.A, problem.T, self.probes)
            self.rhs = np.column_stack([problem.A.adjoint(problem.b), self.probes.probes])

    def __call__(self, lam: float) -> float:
        p = self.problem
        if isinstance(p, SpectralProblem):
            u_hat = spectral_solve(p.model, self.b_hat, lam)
            misfit, _ = spectral_norms(p.model, u_hat, self.b_hat)
            trace = spectral_traces(p.model, lam)[0]
        else:
            # data and probe systems share one block CG run
            sol = cg(normal_operator(p.A, p.T, lam), self.rhs,
                     rel_tol=self.cfg.rel_tol, max_iter=self.cfg.max_iter)[0]
            r = p.A.apply(sol[:, 0]) - p.b
            misfit = float(np.vdot(r, r).real)
            W = sol[:, 1:]
            y, z = self.products
            tA = float(np.sum(np.conj(W) * z).real) / self.probes.J
            tT = float(np.sum(np.conj(W) * y).real) / self.probes.J
            trace = correct_traces(tA, tT, lam, p.n)[0]
        return -self.m * self.sigma_sq + misfit + 2.0 * self.sigma_sq * trace


def upre_objective(problem: Problem, lam: float, sigma_sq: float,
                   trace_source: Optional[str] = None, **kwargs) -> float:
    """UPRE at a single ``lam``; traces come from the exact spectral formulas
    for :class:`SpectralProblem` inputs and from Hutchinson probes otherwise."""
    return _UPREEvaluator(problem, sigma_sq, trace_source, **kwargs)(lam)


@dataclass
class UPREResult:
    lam: float
    objective: float
    coarse_lam: float
    coarse_objective: float
    boundary: bool
    grid: np.ndarray
    values: np.ndarray


def upre_select(problem: Problem, sigma_sq: float, grid: Optional[UPREGrid] = None,
                trace_source: Optional[str] = None, **kwargs) -> UPREResult:
    """Coarse log-grid search followed by one refinement pass.

    The refined grid spans one coarse step either side of the coarse winner
    (clipped to the grid range). A winner sitting on an end of the range is
    flagged with ``boundary=True``.
    """
    grid = grid or UPREGrid()
    ev = _UPREEvaluator(problem, sigma_sq, trace_source, **kwargs)
    coarse = grid.coarse()
    cvals = np.array([ev(l) for l in coarse])
    i = int(np.argmin(cvals))
    lam_c, obj_c = float(coarse[i]), float(cvals[i])
    lo = max(grid.lambda_min, lam_c / grid.step)
    hi = min(grid.lambda_max, lam_c * grid.step)
    fine = np.geomspace(lo, hi, grid.refine_count)
    fvals = np.array([ev(l) for l in fine])
    j = int(np.argmin(fvals))
    lam, obj = (float(fine[j]), float(fvals[j])) if fvals[j] < obj_c else (lam_c, obj_c)
    boundary = bool(np.isclose(lam, grid.lambda_min, rtol=1e-12) or np.isclose(lam, grid.lambda_max, rtol=1e-12))
    return UPREResult(lam, obj, lam_c, obj_c, boundary,
                      np.concatenate([coarse, fine]), np.concatenate([cvals, fvals]))
