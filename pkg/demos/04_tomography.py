"""Parameter selection for parallel-beam tomography, where no FFT shortcut exists.

The system matrix is a sparse matrix of ray-pixel intersection lengths,
so the traces come from Hutchinson probes and every solve is a block CG.
Lambda should track the noise level.

    python demos/04_tomography.py
"""
import time

import numpy as np

from evidentsel.harness.problems import relative_error, tomography_problem
from evidentsel.me_select import me_iterate_general
from evidentsel.tikhonov import solve_cg

n = 64
print(" SNR   true sigma   est sigma    lambda    err_ME   err_LS   iters  time")
for snr in (5, 10, 20, 30):
    problem, sample = tomography_problem(n=n, n_angles=18, detector_count=95, snr=snr, seed=1)
    t = time.perf_counter()
    tr = me_iterate_general(problem, lam0=1.0, seed=0)
    dt = time.perf_counter() - t
    # 18 angles x 95 detectors gives more rows than pixels, so least squares is defined
    ls = solve_cg(problem.A, None, problem.b, 0.0)
    print(f"{snr:4d} {sample.true_sigma:12.4g} {np.sqrt(tr.final.sigma_sq):11.4g} {tr.lam:9.3g} "
          f"{relative_error(tr.u, problem.truth):8.3f} {relative_error(ls.u, problem.truth):8.3f} "
          f"{tr.iterations:6d} {dt:5.1f}s")
