import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from evidentsel.harness.problems import add_noise, gen_signal
from evidentsel.l1 import (ADMMConfig, l1_objective, map_to_l1, optimality_residual, shrink,
                           solve_l1_admm)
from evidentsel.operators import (FDRegularizerSpec, circulant_operator, dense_operator,
                                  identity_operator, make_fd_regularizer, make_gaussian_psf)
from evidentsel.tikhonov import CGConfig, solve_cg


def test_map_examples():
    assert map_to_l1(1.0, 1.0) == pytest.approx(2 * math.sqrt(2), rel=1e-15)
    assert map_to_l1(4.0, 2.0) == pytest.approx(4 * math.sqrt(2), rel=1e-15)


@given(st.floats(1e-6, 1e6), st.floats(1e-6, 1e6), st.floats(1e-4, 1e4))
def test_map_scaling(s2, eta, c):
    assert map_to_l1(c * s2, math.sqrt(c) * eta) == pytest.approx(math.sqrt(c) * map_to_l1(s2, eta), rel=1e-12)


def test_map_preconditions():
    with pytest.raises(ValueError):
        map_to_l1(0.0, 1.0)
    with pytest.raises(ValueError):
        map_to_l1(1.0, -1.0)


finite = st.floats(-1e6, 1e6, allow_nan=False)


@given(arrays(float, st.integers(1, 20), elements=finite), st.floats(0, 1e3))
def test_shrink_properties(v, t):
    out = shrink(v, t)
    assert np.array_equal(out, np.sign(v) * np.maximum(np.abs(v) - t, 0))
    assert np.all(np.abs(out) <= np.abs(v))
    assert np.array_equal(shrink(v, 0.0), v)


def test_config_validation():
    with pytest.raises(ValueError):
        ADMMConfig(rho=0)
    with pytest.raises(ValueError):
        ADMMConfig(abs_tol=0)
    with pytest.raises(ValueError):
        solve_l1_admm(identity_operator(4), make_fd_regularizer(FDRegularizerSpec(1, 4)), np.ones(4), -1)


def test_zero_lambda_is_least_squares(rng):
    n = 20
    A = dense_operator(rng.standard_normal((n, n)))
    T = make_fd_regularizer(FDRegularizerSpec(1, n))
    b = rng.standard_normal(n)
    res = solve_l1_admm(A, T, b, 0.0)
    ls = solve_cg(A, None, b, 0.0, CGConfig(rel_tol=1e-12, max_iter=2000)).u
    assert np.linalg.norm(res.u - ls) <= 1e-6 * np.linalg.norm(ls)


def test_huge_lambda_gives_constant(rng):
    n = 32
    b = rng.standard_normal(n)
    T = make_fd_regularizer(FDRegularizerSpec(1, n))
    lam1 = 10 * 2 * np.abs(T.apply(b)).max() * n
    res = solve_l1_admm(identity_operator(n), T, b, lam1, ADMMConfig(abs_tol=1e-10, rel_tol=1e-10))
    assert np.max(np.abs(res.u - b.mean())) <= 1e-6


def _brute_force_min(A, T, b, lam1):
    def obj(U):
        r = U @ A.T - b
        return np.sum(r * r, axis=-1) + lam1 * np.abs(U @ T.T).sum(axis=-1)

    axes = [np.arange(-3, 3.0001, 0.05)] * 3
    U = np.stack(np.meshgrid(*axes, indexing="ij"), -1).reshape(-1, 3)
    centre = U[np.argmin(obj(U))]
    for half, step in ((0.1, 2e-3), (4e-3, 1e-4)):
        ax = [c + np.arange(-half, half + step / 2, step) for c in centre]
        U = np.stack(np.meshgrid(*ax, indexing="ij"), -1).reshape(-1, 3)
        vals = obj(U)
        centre = U[np.argmin(vals)]
    return float(vals.min())


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_three_unknowns_match_grid_oracle(seed):
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((3, 3))
    b = rng.standard_normal(3)
    T = make_fd_regularizer(FDRegularizerSpec(1, 3))
    lam1 = 0.8
    res = solve_l1_admm(dense_operator(A), T, b, lam1, ADMMConfig(abs_tol=1e-10, rel_tol=1e-10, max_iter=20000))
    got = l1_objective(dense_operator(A), T, b, res.u, lam1)
    oracle = _brute_force_min(A, T.todense(), b, lam1)
    assert got <= oracle * (1 + 1e-4)
    assert abs(got - oracle) <= 1e-4 * oracle


def _fixtures_64():
    n = 64
    u = gen_signal("boxcar", n)
    rng = np.random.default_rng(3)
    yield "dense", dense_operator(rng.standard_normal((n, n)) / math.sqrt(n)), u, 1
    psf = make_gaussian_psf(n, 1.5)
    yield "deconvolve", circulant_operator(psf), u, 1
    yield "denoise-r2", identity_operator(n), gen_signal("hat", n), 2


@pytest.mark.parametrize("name,A,u,r", list(_fixtures_64()), ids=lambda v: v if isinstance(v, str) else "")
def test_subgradient_optimality(name, A, u, r):
    n = 64
    T = make_fd_regularizer(FDRegularizerSpec(r, n))
    b = add_noise(A.apply(u), 10, seed=4).noisy_b
    lam1 = 0.05 * np.linalg.norm(2 * A.adjoint(b), np.inf)
    res = solve_l1_admm(A, T, b, lam1)
    assert res.converged
    assert len(res.primal_residual) == len(res.dual_residual) == res.iterations
    assert optimality_residual(A, T, b, lam1, res) <= 1e-3 * np.linalg.norm(2 * A.adjoint(b))


@pytest.mark.parametrize("warm", [False, True])
def test_objective_not_above_start(warm, rng):
    n = 48
    A = circulant_operator(make_gaussian_psf(n, 1.0))
    T = make_fd_regularizer(FDRegularizerSpec(1, n))
    b = add_noise(A.apply(gen_signal("boxcar", n)), 5, seed=1).noisy_b
    u0 = b + 0.1 * rng.standard_normal(n) if warm else np.zeros(n)
    res = solve_l1_admm(A, T, b, 0.5, u0=u0)
    assert l1_objective(A, T, b, res.u, 0.5) <= l1_objective(A, T, b, u0, 0.5)


def test_nonconvergence_flagged(rng):
    n = 32
    A = dense_operator(rng.standard_normal((n, n)))
    T = make_fd_regularizer(FDRegularizerSpec(1, n))
    res = solve_l1_admm(A, T, rng.standard_normal(n), 1.0, ADMMConfig(max_iter=2))
    assert not res.converged and res.iterations == 2


def test_default_rho_is_lambda(rng):
    n = 16
    T = make_fd_regularizer(FDRegularizerSpec(1, n))
    res = solve_l1_admm(identity_operator(n), T, rng.standard_normal(n), 0.37)
    assert res.rho == 0.37


def test_adaptive_rho_reaches_same_minimum(rng):
    n = 64
    A = circulant_operator(make_gaussian_psf(n, 2.0))
    T = make_fd_regularizer(FDRegularizerSpec(1, n))
    b = add_noise(A.apply(gen_signal("boxcar", n)), 10, seed=2).noisy_b
    fixed = solve_l1_admm(A, T, b, 0.1, ADMMConfig(abs_tol=1e-9, rel_tol=1e-8, max_iter=50000))
    adapt = solve_l1_admm(A, T, b, 0.1, ADMMConfig(abs_tol=1e-9, rel_tol=1e-8, max_iter=50000, adaptive=True))
    f1, f2 = (l1_objective(A, T, b, r.u, 0.1) for r in (fixed, adapt))
    assert abs(f1 - f2) <= 1e-6 * f1


def test_2d_anisotropic_tv_objective(rng):
    n = 8
    T = make_fd_regularizer(FDRegularizerSpec(1, n, dims=2))
    u = rng.standard_normal(n * n)
    U = u.reshape(n, n)
    tv = np.abs(np.roll(U, -1, 0) - U).sum() + np.abs(np.roll(U, -1, 1) - U).sum()
    assert abs(l1_objective(identity_operator(n * n), T, u, u, 1.0) - tv) <= 1e-12 * tv
