"""DFT-domain Tikhonov machinery for denoising, deconvolution and Fourier sampling.

When the forward operator ``C`` and the regularizer ``T_r`` are both
diagonalized by the unitary DFT, every quantity the evidence iteration needs
(solution, residual norms, traces of ``H^{-1} C^T C`` and ``H^{-1} T^T T``)
reduces to elementwise arithmetic on three real arrays::

    f_j = |gamma_j(C)|^2      t_j = |gamma_j(T)|^2      |b_hat_j|^2

Modes where ``f_j + lam * t_j == 0`` are treated with the minimum-norm
pseudo-inverse convention: the solution is zero there and the mode contributes
nothing to either trace.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Optional

import numpy as np

from .operators import CirculantSpec, FourierMask

MODEL_KINDS = ("denoise", "deconvolve", "fourier-mask")


def dft(x: np.ndarray) -> np.ndarray:
    """Unitary DFT over every axis of ``x``."""
    return np.fft.fftn(x, norm="ortho")


def idft(x: np.ndarray) -> np.ndarray:
    return np.fft.ifftn(x, norm="ortho")


def fd_eigenvalues(order: int, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Eigenvalues ``(exp(-2πij/n) - 1)^r`` of ``T_r`` and their squared moduli.

    With the ``C[i, j] = c[(i - j) mod n]`` convention the complex values are
    the spectrum of ``T_r^T`` (their conjugates belong to ``T_r``); only the
    squared moduli enter the traces and solves. ``order == 0`` gives the
    identity regularizer.
    """
    if order < 0:
        raise ValueError("order must be >= 0")
    if order > 0 and n <= 2 * order:
        raise ValueError(f"need n > 2*order, got n={n}, order={order}")
    j = np.arange(n)
    gamma = (np.exp(-2j * np.pi * j / n) - 1.0) ** order
    gamma_sq = 4.0 ** order * np.sin(np.pi * j / n) ** (2 * order)
    return gamma, gamma_sq


def circulant_eigenvalues(first_column) -> np.ndarray:
    """``gamma_j = sum_k c_k exp(-2πijk/n)``, the (non-unitary) DFT of the column."""
    c = np.asarray(first_column)
    if c.size == 0:
        raise ValueError("empty column")
    return np.fft.fftn(c)


@lru_cache(maxsize=64)
def _reg_eigs_sq_cached(grid: tuple, order: int) -> np.ndarray:
    per_axis = [fd_eigenvalues(order, n)[1] for n in grid]
    if len(grid) == 1:
        out = per_axis[0].copy()
    elif len(grid) == 2:
        out = (per_axis[0][:, None] + per_axis[1][None, :]).ravel()
    else:
        raise ValueError("only 1D and 2D grids are supported")
    out.setflags(write=False)
    return out


def reg_eigs_sq(grid: tuple, order: int) -> np.ndarray:
    """``|gamma(T_r^{2D})|^2`` flattened row-major; identity (``order=0``) gives ones."""
    grid = tuple(int(g) for g in grid)
    if order == 0:
        return np.ones(int(np.prod(grid)))
    return _reg_eigs_sq_cached(grid, int(order))


@dataclass(frozen=True)
class SpectralModel:
    """Diagonalized forward and regularization operators.

    Attributes
    ----------
    grid : tuple
        Signal shape, ``(n,)`` or ``(n, n)``.
    forward_eigs : ndarray (complex)
        Eigenvalues of ``C`` (all ones for denoising, the 0/1 indicator of the
        retained rows for a Fourier mask).
    forward_eigs_sq, reg_eigs_sq : ndarray
        ``|gamma(C)|^2`` and ``|gamma(T)|^2``.
    m : int
        Data length: ``n_total`` except ``|S|`` for a Fourier mask.
    kind : str
        ``denoise``, ``deconvolve`` or ``fourier-mask``.
    order : int
        Finite-difference order of ``T`` (0 for ``T = I``).
    mask : FourierMask, optional
    """

    grid: tuple
    forward_eigs: np.ndarray
    forward_eigs_sq: np.ndarray
    reg_eigs_sq: np.ndarray
    m: int
    kind: str
    order: int
    mask: Optional[FourierMask] = None

    def __post_init__(self):
        if self.kind not in MODEL_KINDS:
            raise ValueError(f"unknown model kind {self.kind!r}")
        N = self.n_total
        for name in ("forward_eigs", "forward_eigs_sq", "reg_eigs_sq"):
            if getattr(self, name).shape != (N,):
                raise ValueError(f"{name} must have length {N}")
        if np.any(self.forward_eigs_sq < 0) or np.any(self.reg_eigs_sq < 0):
            raise ValueError("squared eigenvalues must be nonnegative")

    @property
    def n_total(self) -> int:
        return int(np.prod(self.grid))

    @property
    def dims(self) -> int:
        return len(self.grid)


def denoise_model(grid, order: int) -> SpectralModel:
    grid = tuple(np.atleast_1d(grid).tolist())
    N = int(np.prod(grid))
    return SpectralModel(grid, np.ones(N, dtype=complex), np.ones(N), reg_eigs_sq(grid, order),
                         m=N, kind="denoise", order=order)


def deconvolution_model(psf: CirculantSpec | np.ndarray, order: int) -> SpectralModel:
    """Model for ``C`` = circular convolution with ``psf`` (1D or 2D kernel)."""
    if not isinstance(psf, CirculantSpec):
        psf = CirculantSpec(np.asarray(psf))
    gamma = circulant_eigenvalues(psf.first_column).ravel()
    grid = psf.grid
    return SpectralModel(grid, gamma, np.abs(gamma) ** 2, reg_eigs_sq(grid, order),
                         m=psf.n, kind="deconvolve", order=order)


def fourier_mask_model(mask: FourierMask, order: int) -> SpectralModel:
    d = mask.indicator()
    return SpectralModel(mask.grid, d.astype(complex), d, reg_eigs_sq(mask.grid, order),
                         m=mask.m, kind="fourier-mask", order=order, mask=mask)


def transform_data(model: SpectralModel, b) -> np.ndarray:
    """DFT-domain data ``b_hat`` (flattened, length ``n_total``).

    Denoising/deconvolution data are images on ``model.grid``; Fourier-mask
    data are the ``m`` retained coefficients, embedded with zeros off ``S``.
    """
    b = np.asarray(b)
    if model.kind == "fourier-mask":
        if b.size != model.m:
            raise ValueError(f"expected {model.m} Fourier samples, got {b.size}")
        out = np.zeros(model.n_total, dtype=complex)
        out[model.mask.indices] = b.ravel()
        return out
    if b.size != model.n_total:
        raise ValueError(f"expected {model.n_total} samples, got {b.size}")
    return dft(b.reshape(model.grid)).ravel()


def to_spatial(model: SpectralModel, u_hat: np.ndarray) -> np.ndarray:
    """Inverse unitary DFT back onto ``model.grid``.

    Real for denoising/deconvolution with real data; Fourier-mask solutions
    stay complex unless ``S`` is conjugate symmetric.
    """
    u = idft(np.asarray(u_hat).reshape(model.grid))
    if model.kind != "fourier-mask":
        return u.real
    return u


def _safe_inverse(den: np.ndarray) -> np.ndarray:
    inv = np.zeros_like(den)
    np.divide(1.0, den, out=inv, where=den > 0)
    return inv


def spectral_traces(model: SpectralModel, lam: float) -> tuple[float, float]:
    """Exact ``trace(H^{-1} C^T C)`` and ``trace(H^{-1} T^T T)``.

    ``trace_A + lam * trace_T`` equals ``n_total`` minus the number of modes
    annihilated by both ``C`` and ``T``.
    """
    if lam < 0:
        raise ValueError("lam must be nonnegative")
    f, t = model.forward_eigs_sq, model.reg_eigs_sq
    inv = _safe_inverse(f + lam * t)
    return float(np.sum(f * inv)), float(np.sum(t * inv))


def spectral_solve(model: SpectralModel, b_hat: np.ndarray, lam: float) -> np.ndarray:
    """Wiener-form solution ``u_hat = conj(gamma_C) b_hat / (|gamma_C|^2 + lam |gamma_T|^2)``."""
    if lam < 0:
        raise ValueError("lam must be nonnegative")
    b_hat = np.asarray(b_hat).ravel()
    if b_hat.size != model.n_total:
        raise ValueError("b_hat length does not match model")
    inv = _safe_inverse(model.forward_eigs_sq + lam * model.reg_eigs_sq)
    return np.conj(model.forward_eigs) * b_hat * inv


def spectral_norms(model: SpectralModel, u_hat: np.ndarray, b_hat: np.ndarray) -> tuple[float, float]:
    """``(||C u - b||^2, ||T u||^2)`` evaluated in the DFT domain via Parseval."""
    u_hat = np.asarray(u_hat).ravel()
    b_hat = np.asarray(b_hat).ravel()
    resid = model.forward_eigs * u_hat - b_hat
    misfit = float(np.sum(resid.real ** 2 + resid.imag ** 2))
    reg = float(np.sum(model.reg_eigs_sq * (u_hat.real ** 2 + u_hat.imag ** 2)))
    return misfit, reg


@dataclass(frozen=True)
class SpectralProblem:
    """A spectral model together with its (spatial-domain or sampled) data."""

    model: SpectralModel
    b: np.ndarray
    truth: Optional[np.ndarray] = None

    @property
    def b_hat(self) -> np.ndarray:
        return transform_data(self.model, self.b)
