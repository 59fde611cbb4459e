"""Fixed-point structure of the spectral evidence iteration for denoising.

For ``C = I`` and a circulant regularizer with eigenvalue moduli ``p_j = |gamma_j|^2``
one update of the iteration is ``lam -> f(lam)`` with::

    f(lam) = lam * (sum p^2 B^2 |u_hat|^2 / sum p B^2 |u_hat|^2) * (sum B / sum p B)

and ``B = 1 / (1 + lam p)``. Zero is always a fixed point (stable iff
``f'(0) < 1``) and for ``T = T_r`` the map grows like ``kappa_inf * lam^2``,
which produces a second, unstable fixed point near ``1 / kappa_inf``.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.optimize import brentq

from .spectral import SpectralModel


class DegenerateFixedPoint(ArithmeticError):
    """``u_hat`` has no energy outside the null space of ``T``."""


def _check_denoise(model: SpectralModel):
    if model.kind != "denoise":
        raise ValueError("fixed-point analysis covers the denoising case only")


def _weights(u_hat) -> np.ndarray:
    u_hat = np.asarray(u_hat).ravel()
    return u_hat.real ** 2 + u_hat.imag ** 2


def fixpoint_f(model: SpectralModel, u_hat, lam: float) -> float:
    """Evaluate the iteration map ``f(lam; u, T)``."""
    _check_denoise(model)
    if lam < 0:
        raise ValueError("lam must be nonnegative")
    p = model.reg_eigs_sq
    w = _weights(u_hat)
    B = 1.0 / (1.0 + lam * p)
    pBw = p * B * B * w
    den = float(np.sum(pBw))
    if not den > 0:
        raise DegenerateFixedPoint("u_hat lies in the null space of T")
    if lam == 0:
        return 0.0
    return lam * (float(np.sum(p * pBw)) / den) * (float(np.sum(B)) / float(np.sum(p * B)))


def fixpoint_slope_at_zero(model: SpectralModel, u_hat) -> float:
    """``f'(0) = n ||T^T T u||^2 / (sum_j |gamma_j|^2 ||T u||^2)``."""
    _check_denoise(model)
    p = model.reg_eigs_sq
    w = _weights(u_hat)
    Tu = float(np.sum(p * w))
    if not Tu > 0:
        raise DegenerateFixedPoint("||T u|| = 0")
    return model.n_total * float(np.sum(p * p * w)) / (float(np.sum(p)) * Tu)


def mean_reg_eigenvalue(order: int) -> float:
    """``4^r (2r-1)!! / (2r)!!``: the mean of ``|gamma_j(T_r)|^2`` for ``n > 2r``."""
    num = math.prod(range(2 * order - 1, 0, -2)) if order > 0 else 1
    den = math.prod(range(2 * order, 0, -2)) if order > 0 else 1
    return 4.0 ** order * num / den


def kappa_infinity(model: SpectralModel, u_hat) -> tuple[float, float, float]:
    """Quadratic growth constant of ``f`` and its bracketing bounds.

    Returns ``(kappa, lower, upper)``. With ``n0`` null modes of ``T`` (one for
    ``T_r`` in 1D)::

        kappa = sum' |u_hat|^2 / sum' (|u_hat|^2 / p) * n0 / (n - n0)

    the primed sums running over ``p > 0``. The bounds replace ``p`` by its
    smallest nonzero value and by ``dims * 4^r``.
    """
    _check_denoise(model)
    p = model.reg_eigs_sq
    w = _weights(u_hat)
    null = p == 0
    n0 = int(null.sum())
    if n0 == 0:
        raise ValueError("kappa_inf needs a regularizer with a null space (order >= 1)")
    nz = ~null
    s1 = float(np.sum(w[nz]))
    if not s1 > 0:
        raise DegenerateFixedPoint("u_hat has no energy outside the null space of T")
    s2 = float(np.sum(w[nz] / p[nz]))
    scale = n0 / (model.n_total - n0)
    kappa = s1 / s2 * scale
    lower = float(p[nz].min()) * scale
    upper = model.dims * 4.0 ** model.order * scale
    return kappa, lower, upper


@dataclass
class FixedPoint:
    lam: float
    stable: bool
    slope: float


@dataclass
class FixedPointReport:
    fixed_points: list[FixedPoint]
    slope_at_zero: float
    kappa_inf: Optional[float]
    kappa_bounds: Optional[tuple[float, float]]
    scan_lambda: np.ndarray
    scan_f: np.ndarray
    all_fixed: bool = False  # T = I: every lam is a fixed point

    @property
    def interior(self) -> list[FixedPoint]:
        return [fp for fp in self.fixed_points if fp.lam > 0]

    def pattern(self) -> list[str]:
        return ["stable" if fp.stable else "unstable" for fp in self.fixed_points]

    def to_csv(self, fh=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\r\n")
        w.writerow(["lambda", "f"])
        for lam, f in zip(self.scan_lambda, self.scan_f):
            w.writerow([repr(float(lam)), repr(float(f))])
        text = buf.getvalue()
        if fh is not None:
            fh.write(text)
        return text


def _slope(model, u_hat, lam, rel_h=1e-4) -> float:
    h = rel_h * lam
    return (fixpoint_f(model, u_hat, lam + h) - fixpoint_f(model, u_hat, lam - h)) / (2 * h)


def scan_fixed_points(model: SpectralModel, u_hat, lam_range: Optional[tuple[float, float]] = None,
                      points: int = 400) -> FixedPointReport:
    """Locate and classify the fixed points of ``f`` on a log-spaced scan.

    Sign changes of ``f(lam) - lam`` are refined by Brent's method to 1e-6
    relative accuracy and classified by a central-difference slope
    (``h = 1e-4 lam``). Zero is always reported, classified by ``f'(0)``.
    Default range is ``[1e-6, 10 / kappa_inf]``.
    """
    _check_denoise(model)
    slope0 = fixpoint_slope_at_zero(model, u_hat)
    zero = FixedPoint(0.0, slope0 < 1, slope0)
    if np.all(model.reg_eigs_sq == model.reg_eigs_sq[0]):
        # scalar multiple of the identity: f(lam) = lam
        lam = np.geomspace(*(lam_range or (1e-6, 1e6)), points)
        f = np.array([fixpoint_f(model, u_hat, l) for l in lam])
        return FixedPointReport([zero], slope0, None, None, lam, f, all_fixed=True)

    kappa, lo_b, hi_b = kappa_infinity(model, u_hat)
    lam_range = lam_range or (1e-6, 10.0 / kappa)
    lam = np.geomspace(lam_range[0], lam_range[1], points)
    f = np.array([fixpoint_f(model, u_hat, l) for l in lam])
    g = f - lam
    found = [zero]
    for i in np.flatnonzero(np.sign(g[:-1]) * np.sign(g[1:]) < 0):
        root = brentq(lambda l: fixpoint_f(model, u_hat, l) - l, lam[i], lam[i + 1],
                      rtol=1e-10, xtol=1e-300)
        s = _slope(model, u_hat, root)
        found.append(FixedPoint(float(root), abs(s) < 1, float(s)))
    return FixedPointReport(found, slope0, kappa, (lo_b, hi_b), lam, f)
