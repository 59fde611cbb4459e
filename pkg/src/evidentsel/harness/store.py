"""Problem fixtures on disk: a directory holding data, truth and a ``problem.csv`` manifest.

Manifest keys (two-column ``key,value`` CSV): ``operator`` (denoise, deconvolve,
dense, mask, radon), ``grid`` (``n`` or ``rows x cols``), ``order``, plus
operator parameters (``psf_width``; ``angles``, ``detectors``) and noise
metadata (``snr``, ``true_sigma``, ``snr_convention``, ``seed``). Arrays are
stored as EVF1 so round trips are exact.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from ..me_select import LinearProblem
from ..operators import (FDRegularizerSpec, FourierMask, RadonSpec, circulant_operator,
                         dense_operator, fourier_mask_operator, identity_operator,
                         make_fd_regularizer, make_gaussian_psf, make_radon)
from ..spectral import SpectralModel, deconvolution_model, denoise_model, fourier_mask_model
from .io import read_evf, write_csv_rows, write_evf

OPERATOR_KINDS = ("denoise", "deconvolve", "dense", "mask", "radon")
MANIFEST = "problem.csv"


@dataclass
class Fixture:
    meta: dict
    problem: LinearProblem
    model: Optional[SpectralModel]   # None when the operator is not DFT-diagonal

    @property
    def grid(self) -> tuple:
        return parse_grid(self.meta["grid"])


def parse_grid(text: str) -> tuple:
    parts = tuple(int(p) for p in str(text).lower().replace(" ", "").split("x"))
    if len(parts) not in (1, 2) or min(parts) < 1:
        raise ValueError(f"bad grid {text!r}")
    return parts


def format_grid(grid) -> str:
    return "x".join(str(int(g)) for g in grid)


def build_operators(meta: dict, arrays: dict):
    """Reconstruct ``(A, T, model)`` from manifest entries and stored arrays."""
    kind = meta["operator"]
    if kind not in OPERATOR_KINDS:
        raise ValueError(f"unknown operator {kind!r}; choose from {OPERATOR_KINDS}")
    grid = parse_grid(meta["grid"])
    order = int(meta.get("order", 1))
    dims = len(grid)
    if dims == 2 and grid[0] != grid[1]:
        raise ValueError("2D fixtures must be square")
    T = make_fd_regularizer(FDRegularizerSpec(order, grid[0], dims))
    model = None
    if kind == "denoise":
        A = identity_operator(int(np.prod(grid)), grid)
        model = denoise_model(grid, order)
    elif kind == "deconvolve":
        psf = make_gaussian_psf(grid[0], float(meta["psf_width"]), dims)
        A = circulant_operator(psf)
        model = deconvolution_model(psf, order)
    elif kind == "mask":
        mask = FourierMask(grid, arrays["mask"].astype(int))
        A = fourier_mask_operator(mask)
        model = fourier_mask_model(mask, order)
    elif kind == "dense":
        A = dense_operator(arrays["A"])
    else:
        if dims != 2:
            raise ValueError("radon fixtures need a 2D grid")
        n_angles = int(meta["angles"])
        angles = list(np.arange(n_angles) * (180.0 / n_angles))
        A = make_radon(RadonSpec(grid[0], angles, int(meta["detectors"])))
    return A, T, model


def save_fixture(directory, meta: dict, b, truth=None, arrays: Optional[dict] = None) -> Path:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    write_csv_rows(d / MANIFEST, ["key", "value"], sorted((k, str(v)) for k, v in meta.items()))
    b = np.asarray(b)
    if np.iscomplexobj(b):
        write_evf(d / "b_re.evf", b.real)
        write_evf(d / "b_im.evf", b.imag)
    else:
        write_evf(d / "b.evf", b)
    if truth is not None:
        write_evf(d / "truth.evf", truth)
    for name, arr in (arrays or {}).items():
        write_evf(d / f"{name}.evf", arr)
    return d


def read_manifest(directory) -> dict:
    with open(Path(directory) / MANIFEST, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != ["key", "value"]:
        raise ValueError(f"{directory}: malformed {MANIFEST}")
    return {k: v for k, v in rows[1:]}


def load_fixture(directory) -> Fixture:
    d = Path(directory)
    meta = read_manifest(d)
    arrays = {p.stem: read_evf(p) for p in d.glob("*.evf")}
    if "b" in arrays:
        b = arrays["b"]
    elif "b_re" in arrays:
        b = arrays["b_re"] + 1j * arrays["b_im"]
    else:
        raise ValueError(f"{d}: no data file (b.evf)")
    A, T, model = build_operators(meta, arrays)
    truth = arrays.get("truth")
    return Fixture(meta, LinearProblem(A, T, b.ravel(), None if truth is None else truth.ravel()), model)
