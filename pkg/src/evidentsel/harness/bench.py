"""Seeded Monte Carlo trials: draw a problem, run the selectors, record one row per trial.

Every trial owns a child of the master ``SeedSequence`` (spawned by trial
index), so results do not depend on worker count or completion order.
"""
from __future__ import annotations

import csv
import io
import math
import os
import time
import traceback
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from typing import Iterator, Optional

import numpy as np

from ..baselines import UPREGrid, upre_select
from ..l1 import ADMMConfig, map_to_l1, solve_l1_admm
from ..me_select import LinearProblem, me_iterate_general, me_iterate_spectral
from ..operators import (FDRegularizerSpec, circulant_operator, dense_operator, identity_operator,
                         make_fd_regularizer, make_gaussian_psf)
from ..spectral import SpectralProblem, deconvolution_model, denoise_model, spectral_solve, to_spatial
from ..tikhonov import CGConfig, solve_cg
from .problems import DEFAULT_ORDER, SIGNAL_KINDS, add_noise, gaussian_matrix, gen_signal, relative_error

SEED_ENV = "EVIDENTSEL_SEED"
PAPER_TRIALS = 500

OPERATORS = ("dense", "denoise", "deconvolve")
METHODS = ("me", "upre", "l1")


def _bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _list(s: str) -> tuple[str, ...]:
    return tuple(x.strip() for x in s.split(",") if x.strip())


@dataclass
class BenchConfig:
    signals: tuple[str, ...] = ("boxcar",)
    n: int = 128
    snr_min: float = 2.0
    snr_max: float = 20.0
    trials: int = 10
    methods: tuple[str, ...] = ("me",)
    seed: int = 0
    operator: str = "dense"
    mode: str = "general"           # general | spectral (spectral needs a circulant operator)
    psf_width: float = 2.0          # Gaussian blur width for operator = deconvolve
    order: int = 0                  # 0 -> per-signal default
    lambda0: float = 1.0
    tol: float = 1e-4
    max_iter: int = 30
    probes: int = 32
    paper_scale: bool = False       # 500 trials per signal
    wall_time: bool = False         # off keeps the CSV byte-reproducible

    _parsers = {"signals": _list, "methods": _list, "n": int, "trials": int, "seed": int,
                "order": int, "max_iter": int, "probes": int, "snr_min": float, "snr_max": float,
                "psf_width": float, "lambda0": float, "tol": float, "operator": str, "mode": str,
                "paper_scale": _bool, "wall_time": _bool}

    def __post_init__(self):
        self.signals, self.methods = tuple(self.signals), tuple(self.methods)
        bad = [s for s in self.signals if s not in SIGNAL_KINDS]
        if bad or not self.signals:
            raise ValueError(f"unknown signal kinds {bad}; choose from {SIGNAL_KINDS}")
        bad = [m for m in self.methods if m not in METHODS]
        if bad or "me" not in self.methods:
            raise ValueError(f"methods must include 'me' and come from {METHODS}")
        if self.operator not in OPERATORS:
            raise ValueError(f"operator must be one of {OPERATORS}")
        if self.mode not in ("general", "spectral"):
            raise ValueError("mode must be general or spectral")
        if self.mode == "spectral" and self.operator == "dense":
            raise ValueError("spectral mode needs operator = denoise or deconvolve")
        if not 0 < self.snr_min <= self.snr_max:
            raise ValueError("need 0 < snr_min <= snr_max")
        if self.n < 16 or self.trials < 1:
            raise ValueError("need n >= 16 and trials >= 1")

    @property
    def trials_per_signal(self) -> int:
        return PAPER_TRIALS if self.paper_scale else self.trials

    @classmethod
    def from_text(cls, text: str) -> "BenchConfig":
        """Parse flat ``key = value`` lines; ``#`` starts a comment; unknown keys are errors."""
        kw = {}
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"line {lineno}: expected key = value")
            key, val = (s.strip() for s in line.split("=", 1))
            if key not in cls._parsers:
                raise ValueError(f"line {lineno}: unknown key {key!r}")
            if key in kw:
                raise ValueError(f"line {lineno}: duplicate key {key!r}")
            try:
                kw[key] = cls._parsers[key](val)
            except ValueError as exc:
                raise ValueError(f"line {lineno}: bad value for {key!r}: {exc}") from None
        return cls(**kw)

    @classmethod
    def from_file(cls, path) -> "BenchConfig":
        with open(path) as fh:
            return cls.from_text(fh.read())


@dataclass
class TrialRecord:
    trial: int
    kind: str
    n: int
    seed: int
    snr: float
    true_sigma: float
    recovered_sigma: float = math.nan
    lambda_me: float = math.nan
    lambda_upre: float = math.nan
    err_l2: float = math.nan
    err_upre: float = math.nan
    err_l1: float = math.nan
    iterations: int = 0
    status: str = "ok"
    stop_reason: str = ""
    wall_time: float = math.nan


def _trial_problem(cfg: BenchConfig, kind: str, snr: float, rng_op, rng_noise):
    n = cfg.n
    u = gen_signal(kind, n)
    order = cfg.order or DEFAULT_ORDER[kind]
    T = make_fd_regularizer(FDRegularizerSpec(order, n))
    if cfg.operator == "dense":
        A = dense_operator(gaussian_matrix(n, n, rng_op))
        model = None
    elif cfg.operator == "denoise":
        A = identity_operator(n)
        model = denoise_model((n,), order)
    else:
        psf = make_gaussian_psf(n, cfg.psf_width)
        A = circulant_operator(psf)
        model = deconvolution_model(psf, order)
    sample = add_noise(A.apply(u), snr, rng_noise, convention="std")
    return u, LinearProblem(A, T, sample.noisy_b, truth=u), model, sample


def run_trial(cfg: BenchConfig, trial: int, kind: str, ss: np.random.SeedSequence) -> TrialRecord:
    """Run one trial; any exception is caught and recorded in ``status``."""
    seed = int(ss.generate_state(1)[0])
    k_snr, k_op, k_noise, k_probe = ss.spawn(4)
    snr = float(np.random.default_rng(k_snr).uniform(cfg.snr_min, cfg.snr_max))
    rec = TrialRecord(trial, kind, cfg.n, seed, snr, math.nan)
    t0 = time.perf_counter()
    try:
        u, prob, model, sample = _trial_problem(cfg, kind, snr, k_op, k_noise)
        rec.true_sigma = sample.true_sigma
        probe_seed = int(k_probe.generate_state(1)[0])
        if cfg.mode == "spectral":
            traj = me_iterate_spectral(model, prob.b, lam0=cfg.lambda0, max_iter=cfg.max_iter, tol=cfg.tol)
        else:
            traj = me_iterate_general(prob, lam0=cfg.lambda0, max_iter=cfg.max_iter, tol=cfg.tol,
                                      n_probes=cfg.probes, seed=probe_seed)
        rec.stop_reason = traj.stop_reason
        rec.iterations = traj.iterations
        if traj.stop_reason == "divergence":
            rec.status = "flagged"
        rec.lambda_me, rec.recovered_sigma = traj.lam, traj.sigma
        rec.err_l2 = relative_error(np.ravel(traj.u), u)
        if "upre" in cfg.methods:
            sig2 = sample.true_sigma ** 2
            if cfg.mode == "spectral":
                sp = SpectralProblem(model, prob.b, truth=u)
                res = upre_select(sp, sig2)
                u_up = to_spatial(model, spectral_solve(model, sp.b_hat, res.lam))
            else:
                res = upre_select(prob, sig2, n_probes=cfg.probes, seed=probe_seed)
                u_up = solve_cg(prob.A, prob.T, prob.b, res.lam).u
            rec.lambda_upre = res.lam
            rec.err_upre = relative_error(u_up, u)
        if "l1" in cfg.methods and rec.status == "ok":
            lam1 = map_to_l1(traj.final.sigma_sq, traj.eta)
            sol = solve_l1_admm(prob.A, prob.T, prob.b, lam1, ADMMConfig(), u0=np.ravel(traj.u))
            rec.err_l1 = relative_error(sol.u, u)
    except Exception as exc:  # recorded, batch continues
        rec.status = "error"
        rec.stop_reason = f"{type(exc).__name__}: {exc}".replace("\n", " ")
    rec.wall_time = time.perf_counter() - t0
    return rec


def master_seed(cfg: BenchConfig) -> int:
    env = os.environ.get(SEED_ENV)
    return int(env) if env not in (None, "") else cfg.seed


def _jobs(cfg: BenchConfig):
    per = cfg.trials_per_signal
    children = np.random.SeedSequence(master_seed(cfg)).spawn(per * len(cfg.signals))
    for s, kind in enumerate(cfg.signals):
        for t in range(per):
            i = s * per + t
            yield i, kind, children[i]


def run_bench(cfg: BenchConfig, threads: int = 1) -> Iterator[TrialRecord]:
    """Yield one :class:`TrialRecord` per trial, in trial-index order.

    ``threads > 1`` dispatches trials to a thread pool (numpy releases the GIL
    in the heavy kernels); output order and values are unchanged.
    """
    jobs = list(_jobs(cfg))
    if threads <= 1:
        for i, kind, ss in jobs:
            yield run_trial(cfg, i, kind, ss)
        return
    with ThreadPoolExecutor(max_workers=threads) as pool:
        yield from pool.map(lambda j: run_trial(cfg, *j), jobs)


def record_header(include_wall_time: bool = False) -> list[str]:
    names = [f.name for f in fields(TrialRecord)]
    return names if include_wall_time else [n for n in names if n != "wall_time"]


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def records_to_csv(records, fh=None, include_wall_time: bool = False) -> str:
    """RFC-4180 CSV with header; floats written with ``repr`` (round-trip exact).

    Rows stream to ``fh`` as they arrive; the full text is returned only when ``fh`` is None.
    """
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    header = record_header(include_wall_time)
    w.writerow(header)
    for rec in records:
        d = asdict(rec)
        w.writerow([_fmt(d[k]) for k in header])
        if fh is not None:
            fh.write(buf.getvalue())
            buf.seek(0)
            buf.truncate()
    text = buf.getvalue()
    if fh is not None:
        fh.write(text)
    return text


def read_records(path_or_text) -> list[dict]:
    """Parse a records CSV back into dicts of strings."""
    text = path_or_text
    if os.path.exists(str(path_or_text)):
        with open(path_or_text, newline="") as fh:
            text = fh.read()
    return list(csv.DictReader(io.StringIO(text, newline="")))
