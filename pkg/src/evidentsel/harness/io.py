"""File formats: CSV vectors/records, 16-bit PGM images, EVF1 raw float64 arrays.

EVF1 layout (all little-endian)::

    b"EVF1" | u32 rank | u32 dims[rank] | zero padding to a multiple of 16 | float64 data (C order)

A rank-1 or rank-2 array fits in the minimal 16-byte header.
"""
from __future__ import annotations

import csv
import os
import struct
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

EVF_MAGIC = b"EVF1"
PGM_MAXVAL = 65535


def write_csv_rows(path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    """RFC-4180 CSV (CRLF line endings) with a header row."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\r\n")
        w.writerow(header)
        for row in rows:
            w.writerow(row)


def write_vector_csv(path, x, name: str = "value") -> None:
    x = np.asarray(x)
    if x.ndim != 1:
        raise ValueError("expected a 1D array")
    if np.iscomplexobj(x):
        write_csv_rows(path, [f"{name}_re", f"{name}_im"],
                       ([repr(float(v.real)), repr(float(v.imag))] for v in x))
    else:
        write_csv_rows(path, [name], ([repr(float(v))] for v in x))


def read_vector_csv(path) -> np.ndarray:
    """Read a one- or two-column (real, imag) vector written by :func:`write_vector_csv`."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path}: empty CSV")
    body = np.array([[float(v) for v in r] for r in rows[1:]], dtype=float).reshape(len(rows) - 1, -1)
    if body.shape[1] == 1:
        return body[:, 0]
    if body.shape[1] == 2:
        return body[:, 0] + 1j * body[:, 1]
    raise ValueError(f"{path}: expected 1 or 2 columns, got {body.shape[1]}")


def _sidecar(path) -> Path:
    p = Path(path)
    return p.with_name(p.name + ".range.csv")


def write_pgm(path, image, value_range=None) -> tuple[float, float]:
    """Binary P5 PGM with 16-bit big-endian samples.

    The float range ``(min, max)`` goes to ``<path>.range.csv`` so
    :func:`read_pgm` can undo the linear map (quantization step ``(max-min)/65535``).
    """
    img = np.asarray(image, dtype=float)
    if img.ndim != 2:
        raise ValueError("PGM needs a 2D image")
    if not np.all(np.isfinite(img)):
        raise ValueError("image has non-finite values")
    lo, hi = value_range if value_range is not None else (float(img.min()), float(img.max()))
    span = hi - lo
    scaled = np.zeros(img.shape) if span == 0 else (np.clip(img, lo, hi) - lo) / span
    q = np.rint(scaled * PGM_MAXVAL).astype(">u2")
    rows, cols = img.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{cols} {rows}\n{PGM_MAXVAL}\n".encode("ascii"))
        fh.write(q.tobytes())
    write_csv_rows(_sidecar(path), ["min", "max"], [[repr(float(lo)), repr(float(hi))]])
    return float(lo), float(hi)


def _pgm_tokens(data: bytes, count: int):
    """First ``count`` header tokens (comments skipped) and the offset after them."""
    tokens, i = [], 0
    while len(tokens) < count:
        while i < len(data) and data[i:i + 1].isspace():
            i += 1
        if data[i:i + 1] == b"#":
            while i < len(data) and data[i:i + 1] not in (b"\n", b"\r"):
                i += 1
            continue
        j = i
        while j < len(data) and not data[j:j + 1].isspace():
            j += 1
        if j == i:
            raise ValueError("truncated PGM header")
        tokens.append(data[i:j])
        i = j
    return tokens, i + 1  # single whitespace byte ends the header


def read_pgm(path, value_range=None) -> np.ndarray:
    """Read an 8- or 16-bit P5 PGM.

    Values are mapped back through the sidecar range when present (or
    ``value_range``), otherwise normalized to ``[0, 1]`` by maxval.
    """
    data = Path(path).read_bytes()
    tokens, off = _pgm_tokens(data, 4)
    if tokens[0] != b"P5":
        raise ValueError(f"{path}: not a binary PGM (P5)")
    cols, rows, maxval = (int(t) for t in tokens[1:])
    if not 0 < maxval <= PGM_MAXVAL:
        raise ValueError(f"{path}: bad maxval {maxval}")
    dtype = np.dtype("u1") if maxval < 256 else np.dtype(">u2")
    raw = np.frombuffer(data, dtype=dtype, count=rows * cols, offset=off)
    img = raw.reshape(rows, cols).astype(float) / maxval
    if value_range is None and _sidecar(path).exists():
        with open(_sidecar(path), newline="") as fh:
            r = list(csv.reader(fh))
        value_range = (float(r[1][0]), float(r[1][1]))
    if value_range is not None:
        lo, hi = value_range
        img = lo + img * (hi - lo)
    return img


def write_evf(path, array) -> None:
    """Exact float64 dump with the EVF1 header (real arrays only)."""
    if np.iscomplexobj(array):
        raise ValueError("EVF1 stores real float64 data; write real and imaginary parts separately")
    a = np.ascontiguousarray(array, dtype="<f8")
    head = EVF_MAGIC + struct.pack(f"<I{a.ndim}I", a.ndim, *a.shape)
    head += b"\0" * (-len(head) % 16)
    with open(path, "wb") as fh:
        fh.write(head)
        fh.write(a.tobytes())


def read_evf(path) -> np.ndarray:
    data = Path(path).read_bytes()
    if data[:4] != EVF_MAGIC:
        raise ValueError(f"{path}: bad magic {data[:4]!r}")
    (rank,) = struct.unpack_from("<I", data, 4)
    dims = struct.unpack_from(f"<{rank}I", data, 8)
    off = 8 + 4 * rank
    off += -off % 16
    count = int(np.prod(dims)) if rank else 1
    if len(data) - off != 8 * count:
        raise ValueError(f"{path}: payload size does not match header {dims}")
    return np.frombuffer(data, dtype="<f8", offset=off).reshape(dims).astype(float)


def load_array(path) -> np.ndarray:
    """Dispatch on extension: ``.csv``, ``.pgm``, ``.evf``."""
    ext = os.path.splitext(str(path))[1].lower()
    if ext == ".csv":
        return read_vector_csv(path)
    if ext == ".pgm":
        return read_pgm(path)
    if ext == ".evf":
        return read_evf(path)
    raise ValueError(f"unsupported file type {ext!r} (use .csv, .pgm or .evf)")


def save_array(path, array) -> None:
    ext = os.path.splitext(str(path))[1].lower()
    array = np.asarray(array)
    if ext == ".csv":
        write_vector_csv(path, array.ravel())
    elif ext == ".pgm":
        write_pgm(path, array)
    elif ext == ".evf":
        write_evf(path, array)
    else:
        raise ValueError(f"unsupported file type {ext!r} (use .csv, .pgm or .evf)")
