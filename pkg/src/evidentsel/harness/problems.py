"""Test signals, images, noise injection and error metrics."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..me_select import LinearProblem
from ..operators import (FDRegularizerSpec, RadonSpec, dense_operator, make_fd_regularizer,
                         make_radon)

SIGNAL_KINDS = ("boxcar", "hat", "sine", "piecewise_quadratic")

# finite-difference order matched to each signal's smoothness
DEFAULT_ORDER = {"boxcar": 1, "hat": 2, "sine": 2, "piecewise_quadratic": 1}


def gen_signal(kind: str, n: int) -> np.ndarray:
    """Canonical 1D test signals of length ``n``.

    boxcar
        plateau of height 1 on ``[n/4, 3n/4)``.
    hat
        piecewise linear, peak 1 at the centre, support of half-width ``n/4``.
    sine
        one period of ``sin``, amplitude 1.
    piecewise_quadratic
        three quadratic arcs (hump, valley, gentle rise) separated by small jumps.
    """
    if kind not in SIGNAL_KINDS:
        raise ValueError(f"unknown signal kind {kind!r}; choose from {SIGNAL_KINDS}")
    if n < 4:
        raise ValueError("n must be >= 4")
    i = np.arange(n, dtype=float)
    if kind == "boxcar":
        u = np.zeros(n)
        u[n // 4: (3 * n) // 4] = 1.0
        return u
    if kind == "hat":
        c = (n - 1) / 2
        return np.maximum(0.0, 1.0 - np.abs(i - c) / (n / 4))
    if kind == "sine":
        return np.sin(2 * np.pi * i / n)
    x = i / n
    # hump, valley, gentle rise; jumps are small and follow the local slope
    return np.select(
        [x < 0.35, x < 0.7],
        [1.0 - 30.0 * (x - 0.175) ** 2,
         -1.0 + 30.0 * (x - 0.525) ** 2],
        default=-0.05 + 0.1 * ((x - 0.7) / 0.3) ** 2,
    )


# Modified Shepp-Logan ellipses: intensity, semi-axes a, b, centre x0, y0, angle (deg)
_SHEPP_LOGAN = [
    (1.0, 0.69, 0.92, 0.0, 0.0, 0),
    (-0.8, 0.6624, 0.874, 0.0, -0.0184, 0),
    (-0.2, 0.11, 0.31, 0.22, 0.0, -18),
    (-0.2, 0.16, 0.41, -0.22, 0.0, 18),
    (0.1, 0.21, 0.25, 0.0, 0.35, 0),
    (0.1, 0.046, 0.046, 0.0, 0.1, 0),
    (0.1, 0.046, 0.046, 0.0, -0.1, 0),
    (0.1, 0.046, 0.023, -0.08, -0.605, 0),
    (0.1, 0.023, 0.023, 0.0, -0.606, 0),
    (0.1, 0.023, 0.046, 0.06, -0.605, 0),
]


def phantom(n: int) -> np.ndarray:
    """Piecewise-constant Shepp-Logan-type phantom on an ``n x n`` grid, values in ``[0, 1]``."""
    c = (np.arange(n) + 0.5) / n * 2 - 1
    X, Y = np.meshgrid(c, -c)
    img = np.zeros((n, n))
    for val, a, b, x0, y0, ang in _SHEPP_LOGAN:
        th = np.deg2rad(ang)
        xr = (X - x0) * np.cos(th) + (Y - y0) * np.sin(th)
        yr = -(X - x0) * np.sin(th) + (Y - y0) * np.cos(th)
        img[(xr / a) ** 2 + (yr / b) ** 2 <= 1] += val
    return np.clip(img, 0.0, None)


@dataclass
class NoisySample:
    clean_b: np.ndarray
    noisy_b: np.ndarray
    true_sigma: float
    snr: float
    seed: Optional[int]
    convention: str


def noise_sigma(clean, snr: float, convention: Optional[str] = None) -> float:
    """Noise level for a target SNR.

    ``mean``: mean(clean) / sigma (image convention, default for 2D input);
    ``std``: std(clean) / sigma (default for 1D input).
    """
    clean = np.asarray(clean)
    if snr <= 0:
        raise ValueError("snr must be positive")
    convention = convention or ("mean" if clean.ndim == 2 else "std")
    if convention == "mean":
        level = float(np.mean(clean))
    elif convention == "std":
        level = float(np.std(clean))
    else:
        raise ValueError(f"unknown SNR convention {convention!r}")
    if np.isinf(snr):
        return 0.0
    sigma = level / snr
    if not sigma > 0:
        raise ValueError(f"SNR convention {convention!r} gives sigma <= 0 for this input")
    return sigma


def add_noise(clean_b, snr: float, seed=None, convention: Optional[str] = None) -> NoisySample:
    """Add i.i.d. Gaussian noise at the requested SNR (``snr=inf`` adds none)."""
    clean_b = np.asarray(clean_b, dtype=float)
    convention = convention or ("mean" if clean_b.ndim == 2 else "std")
    sigma = noise_sigma(clean_b, snr, convention)
    rng = np.random.default_rng(seed)
    noisy = clean_b + sigma * rng.standard_normal(clean_b.shape) if sigma > 0 else clean_b.copy()
    return NoisySample(clean_b, noisy, sigma, snr, seed, convention)


def relative_error(u, v) -> float:
    """``||u - v|| / ||v||``."""
    u, v = np.asarray(u), np.asarray(v)
    ref = np.linalg.norm(v)
    if ref == 0:
        raise ValueError("reference has zero norm")
    return float(np.linalg.norm(u - v) / ref)


def gaussian_matrix(m: int, n: int, rng) -> np.ndarray:
    """Dense sampling matrix with i.i.d. N(0, 1) entries."""
    return np.random.default_rng(rng).standard_normal((m, n))


def dense_problem(kind: str, n: int, snr: float, seed=None, order: Optional[int] = None):
    """Signal ``kind`` sampled by a square Gaussian matrix; 1D (std) SNR convention.

    Returns ``(LinearProblem, NoisySample)``.
    """
    ss = np.random.SeedSequence(seed)
    k_op, k_noise = ss.spawn(2)
    u = gen_signal(kind, n)
    A = gaussian_matrix(n, n, k_op)
    sample = add_noise(A @ u, snr, k_noise, convention="std")
    T = make_fd_regularizer(FDRegularizerSpec(order or DEFAULT_ORDER[kind], n))
    return LinearProblem(dense_operator(A), T, sample.noisy_b, truth=u), sample


def tomography_problem(n: int = 64, n_angles: int = 18, detector_count: int = 95,
                       snr: float = 10.0, seed=None, order: int = 1):
    """Parallel-beam phantom problem; SNR is mean(projections) / sigma."""
    angles = np.arange(n_angles) * (180.0 / n_angles)
    A = make_radon(RadonSpec(n, list(angles), detector_count))
    u = phantom(n)
    clean = A.apply(u.ravel())
    sample = add_noise(clean, snr, seed, convention="mean")
    T = make_fd_regularizer(FDRegularizerSpec(order, n, dims=2))
    return LinearProblem(A, T, sample.noisy_b, truth=u.ravel()), sample
