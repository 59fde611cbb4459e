"""Command-line entry point: ``evidentsel {gen,select,solve,upre,fixpoint,bench}``.

Results print as ``key=value`` lines on stdout; arrays and tables go to the
files named by ``--out`` / ``--trajectory`` (CSV, PGM or EVF1 by extension).
"""
from __future__ import annotations

import argparse
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import scan_fixed_points
from .baselines import UPREGrid, upre_select
from .harness import bench as benchmod
from .harness.io import read_pgm, save_array, write_csv_rows
from .harness.problems import DEFAULT_ORDER, SIGNAL_KINDS, add_noise, gen_signal, phantom, relative_error
from .harness.store import OPERATOR_KINDS, build_operators, format_grid, load_fixture, save_fixture
from .l1 import ADMMConfig, map_to_l1, solve_l1_admm
from .me_select import me_iterate_general, me_iterate_spectral
from .spectral import SpectralProblem, denoise_model, dft, spectral_solve, to_spatial, transform_data
from .tikhonov import solve_cg


def _emit(**kv):
    for k, v in kv.items():
        if isinstance(v, float):
            v = repr(v)
        print(f"{k}={v}")


def _save_solution(path, u, grid):
    u = np.asarray(u).reshape(grid)
    if str(path).lower().endswith(".pgm") and u.ndim != 2:
        raise ValueError("PGM output needs a 2D fixture")
    if np.iscomplexobj(u) and not str(path).lower().endswith(".csv"):
        # asymmetric Fourier masks leave an imaginary part; images store the real part
        _emit(imag_fraction=float(np.linalg.norm(u.imag) / max(np.linalg.norm(u), 1e-300)))
        u = u.real
    save_array(path, u)


# -- gen ------------------------------------------------------------------------


def cmd_gen(args):
    rng_op, rng_noise = np.random.SeedSequence(args.seed).spawn(2)
    if args.image is not None:
        truth = read_pgm(args.image)
        if truth.shape[0] != truth.shape[1]:
            raise ValueError("input image must be square")
    elif args.phantom:
        truth = phantom(args.n)
    else:
        truth = gen_signal(args.signal, args.n)
    grid = truth.shape
    order = args.order or (1 if truth.ndim == 2 else DEFAULT_ORDER[args.signal])
    meta = {"operator": args.operator, "grid": format_grid(grid), "order": order,
            "seed": args.seed, "snr": args.snr}
    arrays = {}
    if args.operator == "deconvolve":
        meta["psf_width"] = args.psf_width
    elif args.operator == "dense":
        if truth.ndim != 1:
            raise ValueError("dense operators are 1D only")
        arrays["A"] = np.random.default_rng(rng_op).standard_normal((args.n, args.n))
    elif args.operator == "mask":
        N = truth.size
        m = max(1, int(round(args.mask_fraction * N)))
        pick = np.random.default_rng(rng_op).choice(np.arange(1, N), size=m - 1, replace=False)
        arrays["mask"] = np.concatenate([[0], pick]).astype(float)  # DC always sampled
    elif args.operator == "radon":
        if truth.ndim != 2:
            raise ValueError("radon needs a 2D image (--phantom or --image)")
        meta["angles"], meta["detectors"] = args.angles, args.detectors
    A, _, _ = build_operators(meta, arrays)
    convention = "mean" if truth.ndim == 2 else "std"
    if args.operator == "mask":
        # complex samples: noise enters in image space before sampling
        sample = add_noise(truth, args.snr, rng_noise, convention=convention)
        b, sigma = A.apply(sample.noisy_b.ravel()), sample.true_sigma
    else:
        sample = add_noise(A.apply(truth.ravel()), args.snr, rng_noise, convention=convention)
        b, sigma = sample.noisy_b, sample.true_sigma
    meta["true_sigma"] = repr(float(sigma))
    meta["snr_convention"] = convention
    d = save_fixture(args.out, meta, b, truth, arrays)
    save_array(d / ("truth.pgm" if truth.ndim == 2 else "truth.csv"), truth)
    _emit(fixture=str(d), operator=args.operator, grid=format_grid(grid), order=order,
          true_sigma=float(sigma), snr_convention=convention)
    return 0


# -- select / solve -----------------------------------------------------------------


def _run_me(fx, args):
    mode = args.mode or ("spectral" if fx.model is not None else "general")
    if mode == "spectral":
        if fx.model is None:
            raise ValueError(f"operator {fx.meta['operator']!r} has no spectral path; use --mode general")
        return mode, me_iterate_spectral(fx.model, fx.problem.b, lam0=args.lambda0,
                                         max_iter=args.max_iter, tol=args.tol)
    return mode, me_iterate_general(fx.problem, lam0=args.lambda0, max_iter=args.max_iter,
                                    tol=args.tol, n_probes=args.probes, seed=args.seed)


def cmd_select(args):
    fx = load_fixture(args.fixture)
    mode, traj = _run_me(fx, args)
    out = dict(mode=mode, lambda_=traj.lam, sigma=traj.sigma, eta=traj.eta,
               iterations=traj.iterations, converged=traj.converged, stop_reason=traj.stop_reason)
    if traj.message:
        out["message"] = traj.message
    if fx.problem.truth is not None:
        out["rel_error"] = relative_error(np.ravel(traj.u), fx.problem.truth)
    _emit(**{k.rstrip("_"): v for k, v in out.items()})
    if args.trajectory:
        with open(args.trajectory, "w", newline="") as fh:
            traj.to_csv(fh)
    if args.out:
        _save_solution(args.out, np.real_if_close(np.ravel(traj.u)), fx.grid)
    return 0 if traj.stop_reason != "divergence" else 3


def cmd_solve(args):
    fx = load_fixture(args.fixture)
    p = fx.problem
    info = {}
    if args.auto:
        mode, traj = _run_me(fx, args)
        lam = traj.lam
        info.update(mode=mode, sigma=traj.sigma, eta=traj.eta, me_stop_reason=traj.stop_reason)
        if args.reg == "l1":
            lam = map_to_l1(traj.final.sigma_sq, traj.eta)
    else:
        lam = args.lam
    if args.reg == "l2":
        if fx.model is not None:
            u = to_spatial(fx.model, spectral_solve(fx.model, transform_data(fx.model, fx.problem.b), lam))
        else:
            u = solve_cg(p.A, p.T, p.b, lam).u
        u = np.ravel(u)
        _emit(reg="l2", **{"lambda": float(lam)}, **info)
    else:
        if np.iscomplexobj(p.b):
            raise ValueError("l1 solve supports real-valued data only")
        sol = solve_l1_admm(p.A, p.T, p.b, lam, ADMMConfig(max_iter=args.max_admm, adaptive=args.adaptive_rho))
        u = sol.u
        _emit(reg="l1", lambda1=float(lam), admm_iterations=sol.iterations,
              admm_converged=sol.converged, **info)
    if p.truth is not None:
        _emit(rel_error=relative_error(np.real_if_close(u), p.truth))
    if args.out:
        _save_solution(args.out, np.real_if_close(u), fx.grid)
    return 0


# -- upre / fixpoint ------------------------------------------------------------------


def cmd_upre(args):
    fx = load_fixture(args.fixture)
    grid = UPREGrid(args.lambda_min, args.lambda_max)
    if fx.model is not None:
        problem = SpectralProblem(fx.model, fx.problem.b, fx.problem.truth)
        res = upre_select(problem, args.sigma ** 2, grid)
    else:
        res = upre_select(fx.problem, args.sigma ** 2, grid, n_probes=args.probes, seed=args.seed)
    _emit(**{"lambda": res.lam}, objective=res.objective, boundary=res.boundary)
    if args.out:
        order = np.argsort(res.grid, kind="stable")
        write_csv_rows(args.out, ["lambda", "upre"],
                       ([repr(float(res.grid[i])), repr(float(res.values[i]))] for i in order))
    return 0


def cmd_fixpoint(args):
    fx = load_fixture(args.fixture)
    if fx.meta["operator"] != "denoise":
        raise ValueError("fixed-point analysis covers denoising fixtures only")
    order = args.order if args.order is not None else int(fx.meta.get("order", 1))
    model = denoise_model(fx.grid, order)
    u_hat = dft(fx.problem.b.reshape(fx.grid))
    rng = (args.lambda_min, args.lambda_max) if args.lambda_min and args.lambda_max else None
    rep = scan_fixed_points(model, u_hat, rng, points=args.points)
    _emit(order=order, slope_at_zero=rep.slope_at_zero, zero_stable=rep.slope_at_zero < 1,
          all_fixed=rep.all_fixed)
    if rep.kappa_inf is not None:
        _emit(kappa_inf=rep.kappa_inf, kappa_lower=rep.kappa_bounds[0], kappa_upper=rep.kappa_bounds[1])
    for i, fp in enumerate(rep.fixed_points):
        _emit(**{f"fixed_point_{i}": f"{fp.lam!r},{'stable' if fp.stable else 'unstable'},{fp.slope!r}"})
    if args.out:
        with open(args.out, "w", newline="") as fh:
            rep.to_csv(fh)
    return 0


# -- bench ------------------------------------------------------------------------


def cmd_bench(args):
    cfg = benchmod.BenchConfig.from_file(args.config)
    if args.paper_scale:
        cfg.paper_scale = True
    wall = cfg.wall_time or args.wall_time
    records = benchmod.run_bench(cfg, threads=args.threads)
    if args.out:
        with open(args.out, "w", newline="") as fh:
            benchmod.records_to_csv(records, fh, include_wall_time=wall)
    else:
        benchmod.records_to_csv(records, sys.stdout, include_wall_time=wall)
    return 0


# -- parser ---------------------------------------------------------------------------


def _me_flags(p):
    p.add_argument("--mode", choices=("general", "spectral"),
                   help="default: spectral when the operator is DFT-diagonal")
    p.add_argument("--lambda0", type=float, default=1.0)
    p.add_argument("--tol", type=float, default=1e-4)
    p.add_argument("--max-iter", type=int, default=30)
    p.add_argument("--probes", type=int, default=32, help="Hutchinson probes (general mode)")
    p.add_argument("--seed", type=int, default=None, help="probe seed (general mode)")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="evidentsel", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="write a noisy problem fixture directory")
    src = g.add_mutually_exclusive_group()
    src.add_argument("--signal", choices=SIGNAL_KINDS, default="boxcar")
    src.add_argument("--phantom", action="store_true", help="2D Shepp-Logan-type phantom")
    src.add_argument("--image", type=Path, help="2D PGM image (8 or 16 bit)")
    g.add_argument("--n", type=int, default=128)
    g.add_argument("--operator", choices=OPERATOR_KINDS, default="denoise")
    g.add_argument("--snr", type=float, default=10.0)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--order", type=int, default=None, help="regularizer order r")
    g.add_argument("--psf-width", type=float, default=2.0)
    g.add_argument("--mask-fraction", type=float, default=0.3)
    g.add_argument("--angles", type=int, default=18)
    g.add_argument("--detectors", type=int, default=95)
    g.add_argument("--out", type=Path, required=True)
    g.set_defaults(func=cmd_gen)

    s = sub.add_parser("select", help="evidence-maximizing parameter selection")
    s.add_argument("fixture", type=Path)
    _me_flags(s)
    s.add_argument("--trajectory", type=Path, help="CSV of (k, sigma^2, eta^2, lambda, change)")
    s.add_argument("--out", type=Path, help="reconstruction (.csv, .pgm, .evf)")
    s.set_defaults(func=cmd_select)

    v = sub.add_parser("solve", help="l2 or l1 reconstruction")
    v.add_argument("fixture", type=Path)
    v.add_argument("--reg", choices=("l2", "l1"), default="l2")
    which = v.add_mutually_exclusive_group(required=True)
    which.add_argument("--lambda", dest="lam", type=float, help="fixed parameter (lambda1 for l1)")
    which.add_argument("--auto", action="store_true", help="select by evidence maximization")
    _me_flags(v)
    v.add_argument("--max-admm", type=int, default=5000)
    v.add_argument("--adaptive-rho", action="store_true",
                   help="rebalance the ADMM penalty (default: fixed rho = lambda1)")
    v.add_argument("--out", type=Path)
    v.set_defaults(func=cmd_solve)

    u = sub.add_parser("upre", help="UPRE parameter selection (known noise level)")
    u.add_argument("fixture", type=Path)
    u.add_argument("--sigma", type=float, required=True, help="noise standard deviation")
    u.add_argument("--lambda-min", type=float, default=1e-4)
    u.add_argument("--lambda-max", type=float, default=1e4)
    u.add_argument("--probes", type=int, default=32)
    u.add_argument("--seed", type=int, default=None)
    u.add_argument("--out", type=Path, help="CSV of the evaluated UPRE curve")
    u.set_defaults(func=cmd_upre)

    f = sub.add_parser("fixpoint", help="fixed-point scan of the denoising iteration")
    f.add_argument("fixture", type=Path)
    f.add_argument("--order", type=int, default=None)
    f.add_argument("--points", type=int, default=400)
    f.add_argument("--lambda-min", type=float, default=None)
    f.add_argument("--lambda-max", type=float, default=None)
    f.add_argument("--out", type=Path, help="CSV of the (lambda, f) scan")
    f.set_defaults(func=cmd_fixpoint)

    b = sub.add_parser("bench", help="Monte Carlo benchmark from a key = value config file")
    b.add_argument("config", type=Path)
    b.add_argument("--threads", type=int, default=1, help="worker cap")
    b.add_argument("--out", type=Path, help="records CSV (default: stdout)")
    b.add_argument("--wall-time", action="store_true", help="include the wall_time column")
    b.add_argument("--paper-scale", action="store_true", help="500 trials per signal")
    b.set_defaults(func=cmd_bench)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError, ArithmeticError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
