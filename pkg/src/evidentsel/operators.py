"""Linear operators used as forward models and regularizers.

Every operator maps column arrays: ``apply`` accepts a vector of length ``n``
or an ``(n, k)`` block and returns ``m`` (or ``(m, k)``) values, so block
Krylov solvers can push many right-hand sides through a single call.
2D images are flattened row-major.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from math import comb
from typing import Callable, Optional, Sequence

import numpy as np
import scipy.sparse as sp

KINDS = ("dense", "circulant", "fourier-mask", "sparse")


class LinearOperator:
    """Matrix-free linear map with an explicit adjoint.

    Parameters
    ----------
    shape : (int, int)
        ``(m, n)``, rows by columns.
    matvec, rmatvec : callable
        Forward and adjoint maps acting on axis 0 of their argument.
    kind : str
        One of ``dense``, ``circulant``, ``fourier-mask``, ``sparse``.
    gram_eigs : ndarray, optional
        Eigenvalues of ``A^T A`` in the unitary DFT basis (flattened over
        ``grid``) when the Gram matrix is diagonalized by the DFT.
    grid : tuple, optional
        Image shape the domain vector is reshaped to.
    """

    def __init__(self, shape, matvec: Callable, rmatvec: Callable, kind: str = "dense",
                 dtype=float, gram_eigs: Optional[np.ndarray] = None,
                 grid: Optional[tuple] = None, **meta):
        if kind not in KINDS:
            raise ValueError(f"unknown operator kind {kind!r}")
        self.shape = (int(shape[0]), int(shape[1]))
        self._matvec = matvec
        self._rmatvec = rmatvec
        self.kind = kind
        self.dtype = np.dtype(dtype)
        self.gram_eigs = gram_eigs
        self.grid = grid
        self.meta = meta

    def __repr__(self):
        return f"<LinearOperator {self.kind} {self.shape[0]}x{self.shape[1]}>"

    def apply(self, x):
        x = np.asarray(x)
        if x.shape[0] != self.shape[1]:
            raise ValueError(f"operator expects {self.shape[1]} rows, got {x.shape[0]}")
        return self._matvec(x)

    def adjoint(self, y):
        y = np.asarray(y)
        if y.shape[0] != self.shape[0]:
            raise ValueError(f"adjoint expects {self.shape[0]} rows, got {y.shape[0]}")
        return self._rmatvec(y)

    def __matmul__(self, x):
        return self.apply(x)

    @property
    def T(self) -> "LinearOperator":
        return LinearOperator((self.shape[1], self.shape[0]), self._rmatvec, self._matvec,
                              kind=self.kind, dtype=self.dtype)

    def todense(self) -> np.ndarray:
        """Materialize the matrix by applying it to the identity."""
        return np.asarray(self.apply(np.eye(self.shape[1])))


def apply(op: LinearOperator, x) -> np.ndarray:
    return op.apply(x)


def adjoint(op: LinearOperator, y) -> np.ndarray:
    return op.adjoint(y)


def dense_operator(matrix) -> LinearOperator:
    """Wrap an explicit matrix; scipy sparse input yields a ``sparse`` operator."""
    if sp.issparse(matrix):
        M = sp.csr_matrix(matrix)
        MT = M.T.tocsr()
        return LinearOperator(M.shape, lambda x: M @ x, lambda y: MT @ y,
                              kind="sparse", dtype=M.dtype, matrix=M)
    M = np.asarray(matrix)
    if M.ndim != 2:
        raise ValueError("matrix must be 2D")
    return LinearOperator(M.shape, lambda x: M @ x, lambda y: M.T @ y,
                          kind="dense", dtype=M.dtype, matrix=M)


def identity_operator(n: int, grid: Optional[tuple] = None) -> LinearOperator:
    grid = grid or (n,)
    return LinearOperator((n, n), lambda x: x.copy(), lambda y: y.copy(), kind="circulant",
                          gram_eigs=np.ones(n), grid=grid)


# -- circulant convolutions -------------------------------------------------


@dataclass(frozen=True)
class CirculantSpec:
    """First column (1D) or first-column image (2D, block circulant) of ``C``.

    ``C[i, j] = c[(i - j) mod n]`` so ``C x`` is the circular convolution
    ``c * x`` and ``C = F^{-1} diag(DFT(c)) F``.
    """

    first_column: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.first_column)
        if c.ndim not in (1, 2) or c.size == 0:
            raise ValueError("first_column must be a nonempty 1D or 2D array")
        object.__setattr__(self, "first_column", c)

    @property
    def grid(self) -> tuple:
        return self.first_column.shape

    @property
    def n(self) -> int:
        return int(self.first_column.size)

    def eigenvalues(self) -> np.ndarray:
        return np.fft.fftn(self.first_column)

    def operator(self) -> LinearOperator:
        return circulant_operator(self)


def _as_grid(x, grid):
    return x.reshape(grid + x.shape[1:])


def circulant_operator(spec: CirculantSpec | np.ndarray) -> LinearOperator:
    """Circulant (or block-circulant-with-circulant-blocks) convolution via FFT."""
    if not isinstance(spec, CirculantSpec):
        spec = CirculantSpec(np.asarray(spec))
    grid = spec.grid
    axes = tuple(range(len(grid)))
    gamma = spec.eigenvalues()
    real = np.isrealobj(spec.first_column)
    n = spec.n

    def _conv(x, eig):
        X = _as_grid(x, grid)
        e = eig.reshape(grid + (1,) * (X.ndim - len(grid)))
        out = np.fft.ifftn(e * np.fft.fftn(X, axes=axes), axes=axes)
        if real and np.isrealobj(x):
            out = out.real
        return out.reshape(x.shape)

    return LinearOperator((n, n), lambda x: _conv(x, gamma), lambda y: _conv(y, gamma.conj()),
                          kind="circulant", dtype=spec.first_column.dtype,
                          gram_eigs=(np.abs(gamma) ** 2).ravel(), grid=grid, spec=spec)


def make_gaussian_psf(n: int, width: float, dims: int = 1) -> CirculantSpec:
    """Periodized, unit-sum Gaussian kernel centred at index 0.

    ``width`` is the standard deviation in pixels; ``width == 0`` gives the
    delta kernel (identity convolution). The 2D kernel is the outer product of
    the 1D one.
    """
    if width < 0:
        raise ValueError("width must be nonnegative")
    if dims not in (1, 2):
        raise ValueError("dims must be 1 or 2")
    k = np.arange(n, dtype=float)
    if width == 0:
        g = np.zeros(n)
        g[0] = 1.0
    else:
        # wrap tails from neighbouring periods
        reps = int(np.ceil(8 * width / n)) + 1
        g = sum(np.exp(-0.5 * ((k + p * n) / width) ** 2) for p in range(-reps, reps + 1))
        g /= g.sum()
    if dims == 2:
        g = np.outer(g, g)
    return CirculantSpec(g)


# -- finite differences -----------------------------------------------------


@dataclass(frozen=True)
class FDRegularizerSpec:
    order: int
    n: int
    dims: int = 1

    def __post_init__(self):
        if self.order < 1:
            raise ValueError("order must be >= 1")
        if self.n <= 2 * self.order:
            raise ValueError(f"need n > 2*order, got n={self.n}, order={self.order}")
        if self.dims not in (1, 2):
            raise ValueError("dims must be 1 or 2")


def fd_stencil(order: int) -> list[tuple[int, int]]:
    """``T_r = (S - I)^r`` with ``(S x)[i] = x[i+1]``, as ``(shift, coeff)`` pairs."""
    return [(m, comb(order, m) * (-1) ** (order - m)) for m in range(order + 1)]


def fd_first_column(order: int, n: int) -> np.ndarray:
    c = np.zeros(n)
    for m, coeff in fd_stencil(order):
        c[(-m) % n] += coeff
    return c


def fd_matrix(spec: FDRegularizerSpec) -> sp.csr_matrix:
    """Sparse ``T_r``; in 2D the stack of ``T_r ⊗ I`` over ``I ⊗ T_r``."""
    n = spec.n
    shift = sp.eye(n, k=1, format="csr") + sp.eye(n, k=1 - n, format="csr")
    T1 = sp.csr_matrix((n, n))
    power = sp.eye(n, format="csr")
    for m, coeff in fd_stencil(spec.order):
        if m:
            power = power @ shift
        T1 = T1 + coeff * power
    T1.eliminate_zeros()
    if spec.dims == 1:
        return T1.tocsr()
    I = sp.eye(n, format="csr")
    return sp.vstack([sp.kron(T1, I), sp.kron(I, T1)]).tocsr()


def make_fd_regularizer(spec: FDRegularizerSpec) -> LinearOperator:
    """Wraparound finite-difference operator ``T_r``.

    In 2D the output stacks ``T_r ⊗ I`` (differences along rows of the image
    grid, axis 0) over ``I ⊗ T_r`` (axis 1), giving a ``2n^2 x n^2`` operator.
    """
    from .spectral import reg_eigs_sq  # local import: spectral depends on this module

    r, n = spec.order, spec.n
    M = fd_matrix(spec)
    MT = M.T.tocsr()
    grid = (n,) if spec.dims == 1 else (n, n)
    extra = {"spec": CirculantSpec(fd_first_column(r, n))} if spec.dims == 1 else {}
    return LinearOperator(M.shape, lambda x: M @ x, lambda y: MT @ y, kind="circulant",
                          gram_eigs=reg_eigs_sq(grid, r), grid=grid, order=r, matrix=M, **extra)


# -- Fourier row selection ---------------------------------------------------


@dataclass(frozen=True)
class FourierMask:
    """Retained rows ``S`` of the unitary DFT over ``grid`` (flattened, row-major)."""

    grid: tuple
    indices: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))

    def __post_init__(self):
        grid = tuple(int(g) for g in np.atleast_1d(self.grid))
        idx = np.asarray(self.indices, dtype=np.int64).ravel()
        total = int(np.prod(grid))
        if len(np.unique(idx)) != len(idx):
            raise ValueError("mask indices must be unique")
        if idx.size and (idx.min() < 0 or idx.max() >= total):
            raise ValueError("mask indices out of range")
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "indices", np.sort(idx))

    @property
    def n_total(self) -> int:
        return int(np.prod(self.grid))

    @property
    def m(self) -> int:
        return int(self.indices.size)

    def indicator(self) -> np.ndarray:
        d = np.zeros(self.n_total)
        d[self.indices] = 1.0
        return d


def fourier_mask_operator(mask: FourierMask) -> LinearOperator:
    """``A = P F`` with ``F`` the unitary DFT; data and adjoint are complex."""
    grid, idx, N = mask.grid, mask.indices, mask.n_total
    axes = tuple(range(len(grid)))

    def fwd(x):
        X = np.fft.fftn(_as_grid(x, grid), axes=axes, norm="ortho")
        return X.reshape(x.shape)[idx]

    def adj(y):
        full = np.zeros((N,) + y.shape[1:], dtype=complex)
        full[idx] = y
        return np.fft.ifftn(_as_grid(full, grid), axes=axes, norm="ortho").reshape(full.shape)

    return LinearOperator((mask.m, N), fwd, adj, kind="fourier-mask", dtype=complex,
                          grid=grid, mask=mask)


# -- parallel-beam tomography -----------------------------------------------


@dataclass(frozen=True)
class RadonSpec:
    """Parallel-beam geometry over an ``n x n`` grid of unit pixels centred at the origin.

    Detector bin ``i`` sits at offset ``t_i = (i - (N-1)/2) * spacing``.
    """

    n: int
    angles: Sequence[float]
    detector_count: int
    spacing: float = 1.0

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("n must be >= 2")
        if len(self.angles) < 1:
            raise ValueError("need at least one angle")
        if self.detector_count < 1:
            raise ValueError("detector_count must be >= 1")

    def offsets(self) -> np.ndarray:
        N = self.detector_count
        return (np.arange(N) - (N - 1) / 2) * self.spacing


def _ray_segments(t, c, s, n):
    """Pixel indices and intersection lengths of the line ``(x,y)·(c,s) = t``."""
    h = n / 2
    p0 = np.array([t * c, t * s])
    d = np.array([-s, c])
    lo, hi = -np.inf, np.inf
    for k in range(2):
        if d[k] == 0:
            if not (-h <= p0[k] <= h):
                return None
            continue
        a, b = (-h - p0[k]) / d[k], (h - p0[k]) / d[k]
        lo, hi = max(lo, min(a, b)), min(hi, max(a, b))
    if hi <= lo:
        return None
    params = [np.array([lo, hi])]
    lines = np.arange(n + 1) - h
    for k in range(2):
        if d[k] != 0:
            sk = (lines - p0[k]) / d[k]
            params.append(sk[(sk > lo) & (sk < hi)])
    sv = np.unique(np.concatenate(params))
    lengths = np.diff(sv)
    mid = 0.5 * (sv[1:] + sv[:-1])
    col = np.floor(p0[0] + mid * d[0] + h).astype(int)
    row = np.floor(p0[1] + mid * d[1] + h).astype(int)
    ok = (lengths > 0) & (col >= 0) & (col < n) & (row >= 0) & (row < n)
    return row[ok] * n + col[ok], lengths[ok]


def radon_matrix(spec: RadonSpec) -> sp.csr_matrix:
    """Sparse system matrix with exact ray–pixel intersection lengths.

    Row ``j * N + i`` holds the ray at angle ``angles[j]`` (degrees) and
    offset ``t_i``; pixel ``(row, col)`` covers ``x in [col - n/2, col - n/2 + 1]``,
    ``y in [row - n/2, row - n/2 + 1]``.
    """
    n, N = spec.n, spec.detector_count
    t = spec.offsets()
    rows, cols, vals = [], [], []
    for j, ang in enumerate(spec.angles):
        th = np.deg2rad(ang)
        c, s = np.cos(th), np.sin(th)
        c = 0.0 if abs(c) < 1e-14 else c
        s = 0.0 if abs(s) < 1e-14 else s
        for i, ti in enumerate(t):
            seg = _ray_segments(ti, c, s, n)
            if seg is None:
                continue
            pix, ln = seg
            rows.append(np.full(pix.size, j * N + i))
            cols.append(pix)
            vals.append(ln)
    if rows:
        rows, cols, vals = map(np.concatenate, (rows, cols, vals))
    M = sp.coo_matrix((vals, (rows, cols)), shape=(N * len(spec.angles), n * n))
    return M.tocsr()


def make_radon(spec: RadonSpec) -> LinearOperator:
    op = dense_operator(radon_matrix(spec))
    op.grid = (spec.n, spec.n)
    op.meta["radon"] = spec
    return op
