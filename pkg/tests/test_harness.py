import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import evidentsel.harness.bench as bench
from evidentsel.harness.bench import BenchConfig, read_records, records_to_csv, run_bench
from evidentsel.harness.io import (load_array, read_evf, read_pgm, read_vector_csv, save_array,
                                   write_evf, write_pgm, write_vector_csv)
from evidentsel.harness.problems import (SIGNAL_KINDS, add_noise, dense_problem, gen_signal,
                                         noise_sigma, phantom, relative_error, tomography_problem)
from evidentsel.harness.store import load_fixture, save_fixture


# -- signals and noise --------------------------------------------------------------


def test_boxcar_n8():
    assert np.array_equal(gen_signal("boxcar", 8), [0, 0, 1, 1, 1, 1, 0, 0])


@pytest.mark.parametrize("n", [16, 64, 250])
def test_sine_full_period(n):
    s = gen_signal("sine", n)
    assert abs(s.max() - 1) <= 1e-2 and abs(s.mean()) <= 1e-10


def test_hat_symmetric_peak():
    h = gen_signal("hat", 9)
    assert np.argmax(h) == 4 and h[4] == 1 and np.allclose(h, h[::-1])


def test_piecewise_quadratic_shape():
    u = gen_signal("piecewise_quadratic", 200)
    x = np.arange(200) / 200
    assert u.max() == pytest.approx(1.0, abs=1e-3) and u.min() == pytest.approx(-1.0, abs=1e-3)
    for a, b in ((0, 0.35), (0.35, 0.7), (0.7, 1.0)):
        seg = (x >= a) & (x < b)
        # each piece is exactly quadratic: third differences vanish
        assert np.max(np.abs(np.diff(u[seg], 3))) <= 1e-12


def test_unknown_signal_rejected():
    with pytest.raises(ValueError):
        gen_signal("square", 32)
    with pytest.raises(ValueError):
        gen_signal("boxcar", 2)


def test_signals_deterministic():
    for kind in SIGNAL_KINDS:
        assert np.array_equal(gen_signal(kind, 64), gen_signal(kind, 64))


def test_add_noise_examples():
    clean = np.full((10, 10), 10.0)
    s = add_noise(clean, 5, seed=0)
    assert s.true_sigma == 2.0 and s.convention == "mean"
    inf = add_noise(gen_signal("hat", 32), np.inf, seed=0)
    assert np.array_equal(inf.noisy_b, inf.clean_b) and inf.true_sigma == 0


def test_add_noise_sample_std():
    s = add_noise(gen_signal("sine", 20000), 4, seed=9)
    e = s.noisy_b - s.clean_b
    assert abs(e.std() / s.true_sigma - 1) <= 0.05
    assert abs(e.mean()) <= 4 * s.true_sigma / np.sqrt(e.size)


def test_true_sigma_is_the_sigma_used():
    clean = gen_signal("boxcar", 64)
    s = add_noise(clean, 3, seed=12)
    z = np.random.default_rng(12).standard_normal(64)
    assert np.array_equal(s.noisy_b, clean + s.true_sigma * z)
    assert s.true_sigma == clean.std() / 3


def test_add_noise_rejects_bad_inputs():
    with pytest.raises(ValueError):
        add_noise(np.ones(16), 5)  # zero std under the 1D convention
    with pytest.raises(ValueError):
        add_noise(np.zeros((4, 4)), 5)  # zero mean under the 2D convention
    with pytest.raises(ValueError):
        noise_sigma(np.arange(5.0), 0)


def test_relative_error_examples(rng):
    v = rng.standard_normal(20)
    assert relative_error(v, v) == 0
    assert relative_error(2 * v, v) == pytest.approx(1.0)
    d = rng.standard_normal(20)
    d *= 0.1 * np.linalg.norm(v) / np.linalg.norm(d)
    assert relative_error(v + d, v) == pytest.approx(0.1)
    with pytest.raises(ValueError):
        relative_error(v, np.zeros(20))


def test_phantom_range():
    p = phantom(64)
    assert p.shape == (64, 64) and p.min() >= 0 and p.max() <= 1.0 + 1e-12
    assert np.allclose(p, p[:, ::-1], atol=1.0) and p[0, 0] == 0


def test_dense_and_tomography_problems():
    prob, s = dense_problem("hat", 32, 5, seed=1)
    assert prob.A.shape == (32, 32) and np.array_equal(prob.b, s.noisy_b)
    prob2, _ = dense_problem("hat", 32, 5, seed=1)
    assert np.array_equal(prob.b, prob2.b)
    tp, ts = tomography_problem(16, 6, 23, snr=10, seed=0)
    assert tp.A.shape == (6 * 23, 256) and ts.convention == "mean"


# -- file formats ----------------------------------------------------------------------


def test_vector_csv_round_trip(tmp_path, rng):
    x = rng.standard_normal(17)
    write_vector_csv(tmp_path / "x.csv", x)
    assert np.array_equal(read_vector_csv(tmp_path / "x.csv"), x)
    assert (tmp_path / "x.csv").read_bytes().startswith(b"value\r\n")
    z = x + 1j * rng.standard_normal(17)
    write_vector_csv(tmp_path / "z.csv", z)
    assert np.array_equal(read_vector_csv(tmp_path / "z.csv"), z)


def test_evf_header_and_round_trip(tmp_path, rng):
    a = rng.standard_normal((3, 5))
    write_evf(tmp_path / "a.evf", a)
    raw = (tmp_path / "a.evf").read_bytes()
    assert raw[:4] == b"EVF1" and struct.unpack("<3I", raw[4:16]) == (2, 3, 5)
    assert len(raw) == 16 + 8 * 15
    assert np.array_equal(read_evf(tmp_path / "a.evf"), a)
    c = rng.standard_normal((2, 2, 2, 2))
    write_evf(tmp_path / "c.evf", c)
    assert len((tmp_path / "c.evf").read_bytes()) == 32 + 8 * 16
    assert np.array_equal(read_evf(tmp_path / "c.evf"), c)


def test_evf_rejects_corruption(tmp_path):
    write_evf(tmp_path / "a.evf", np.ones(4))
    raw = (tmp_path / "a.evf").read_bytes()
    (tmp_path / "bad.evf").write_bytes(b"XXXX" + raw[4:])
    (tmp_path / "short.evf").write_bytes(raw[:-8])
    for name in ("bad.evf", "short.evf"):
        with pytest.raises(ValueError):
            read_evf(tmp_path / name)
    with pytest.raises(ValueError):
        write_evf(tmp_path / "z.evf", np.ones(3) * 1j)


def test_pgm_16bit_round_trip(tmp_path, rng):
    img = rng.uniform(-3, 7, (12, 9))
    lo, hi = write_pgm(tmp_path / "i.pgm", img)
    head = (tmp_path / "i.pgm").read_bytes()[:20]
    assert head.startswith(b"P5\n9 12\n65535\n")
    back = read_pgm(tmp_path / "i.pgm")
    assert back.shape == (12, 9)
    assert np.max(np.abs(back - img)) <= 0.5 * (hi - lo) / 65535 + 1e-12


def test_pgm_8bit_with_comment(tmp_path):
    data = np.arange(12, dtype=np.uint8).reshape(3, 4) * 20
    (tmp_path / "g.pgm").write_bytes(b"P5\n# made by hand\n4 3\n255\n" + data.tobytes())
    assert np.allclose(read_pgm(tmp_path / "g.pgm"), data / 255)
    assert np.allclose(read_pgm(tmp_path / "g.pgm", value_range=(0, 255)), data)


def test_load_save_dispatch(tmp_path, rng):
    x = rng.standard_normal((4, 4))
    for ext in (".evf", ".pgm"):
        save_array(tmp_path / f"x{ext}", x)
        assert np.allclose(load_array(tmp_path / f"x{ext}"), x, atol=1e-4)
    with pytest.raises(ValueError):
        load_array(tmp_path / "x.txt")


def test_fixture_round_trip(tmp_path):
    b = np.arange(16.0)
    save_fixture(tmp_path / "fx", {"operator": "denoise", "grid": "16", "order": 2}, b, truth=b)
    fx = load_fixture(tmp_path / "fx")
    assert np.array_equal(fx.problem.b, b) and fx.model.kind == "denoise" and fx.grid == (16,)


# -- bench --------------------------------------------------------------------------------


CONFIG = """
# smoke run
signals = boxcar, hat
n = 32
trials = 3
methods = me, upre, l1
seed = 42
"""


def test_config_parsing():
    cfg = BenchConfig.from_text(CONFIG)
    assert cfg.signals == ("boxcar", "hat") and cfg.n == 32 and cfg.methods == ("me", "upre", "l1")
    assert BenchConfig.from_text("paper_scale = true").trials_per_signal == bench.PAPER_TRIALS


@pytest.mark.parametrize("text", ["colour = red", "n = 32\nn = 64", "n 32", "n = x",
                                  "signals = square", "methods = upre", "mode = spectral"])
def test_config_errors(text):
    with pytest.raises(ValueError):
        BenchConfig.from_text(text)


def test_one_trial_smoke():
    recs = list(run_bench(BenchConfig(trials=1, n=32)))
    text = records_to_csv(recs)
    rows = read_records(text)
    assert len(rows) == 1 and rows[0]["kind"] == "boxcar" and rows[0]["status"] == "ok"
    assert "wall_time" not in rows[0]
    assert np.isfinite(float(rows[0]["recovered_sigma"]))


def test_bench_deterministic_and_thread_independent(tmp_path):
    cfg = BenchConfig.from_text(CONFIG)
    a = records_to_csv(run_bench(cfg))
    b = records_to_csv(run_bench(cfg))
    c = records_to_csv(run_bench(cfg, threads=3))
    assert a == b == c
    with open(tmp_path / "r.csv", "w", newline="") as fh:
        records_to_csv(run_bench(cfg), fh)
    assert (tmp_path / "r.csv").read_bytes().decode() == a
    rows = read_records(a)
    assert [int(r["trial"]) for r in rows] == list(range(6))
    assert all(np.isfinite(float(r[k])) for r in rows for k in ("lambda_upre", "err_l1"))


def test_env_seed_override(monkeypatch):
    cfg = BenchConfig(trials=2, n=32, seed=1)
    base = records_to_csv(run_bench(cfg))
    monkeypatch.setenv(bench.SEED_ENV, "99")
    env = records_to_csv(run_bench(cfg))
    assert env == records_to_csv(run_bench(BenchConfig(trials=2, n=32, seed=99)))
    assert env != base


def test_failure_recorded_batch_continues(monkeypatch):
    real = bench.me_iterate_general
    calls = []

    def flaky(prob, **kw):
        calls.append(1)
        if len(calls) == 2:
            raise RuntimeError("boom")
        return real(prob, **kw)

    monkeypatch.setattr(bench, "me_iterate_general", flaky)
    recs = list(run_bench(BenchConfig(trials=3, n=32)))
    assert [r.status for r in recs] == ["ok", "error", "ok"]
    assert "boom" in recs[1].stop_reason


def test_wall_time_column_opt_in():
    recs = list(run_bench(BenchConfig(trials=1, n=32)))
    rows = read_records(records_to_csv(recs, include_wall_time=True))
    assert float(rows[0]["wall_time"]) > 0


def test_spectral_bench_mode():
    cfg = BenchConfig(operator="deconvolve", mode="spectral", trials=4, n=64, methods=("me", "upre"))
    recs = list(run_bench(cfg))
    assert all(r.status == "ok" and r.lambda_upre > 0 for r in recs)


@settings(max_examples=20, deadline=None)
@given(st.sampled_from(SIGNAL_KINDS), st.integers(16, 300))
def test_records_finite_unless_flagged(kind, n):
    rec = bench.run_trial(BenchConfig(signals=(kind,), n=max(n, 16), operator="denoise", mode="spectral"),
                          0, kind, np.random.SeedSequence(n))
    if rec.status == "ok":
        assert all(np.isfinite(v) for v in (rec.snr, rec.true_sigma, rec.recovered_sigma,
                                            rec.lambda_me, rec.err_l2))
