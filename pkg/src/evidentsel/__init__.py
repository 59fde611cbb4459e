"""Automatic regularization-parameter selection by evidence maximization."""

__version__ = "0.1.0"

from .operators import (CirculantSpec, FDRegularizerSpec, FourierMask, LinearOperator, RadonSpec,
                        adjoint, apply, circulant_operator, dense_operator, fourier_mask_operator,
                        identity_operator, make_fd_regularizer, make_gaussian_psf, make_radon)
from .spectral import (SpectralModel, SpectralProblem, deconvolution_model, denoise_model,
                       fourier_mask_model, spectral_norms, spectral_solve, spectral_traces)
from .tikhonov import CGConfig, SolveResult, solve_cg
from .me_select import (LinearProblem, METrajectory, correct_traces, hutchinson_traces, make_probes,
                        me_iterate_general, me_iterate_spectral, me_step)
from .l1 import ADMMConfig, L1Result, map_to_l1, solve_l1_admm
from .baselines import UPREGrid, UPREResult, upre_objective, upre_select
from .analysis import (FixedPointReport, fixpoint_f, fixpoint_slope_at_zero, kappa_infinity,
                       scan_fixed_points)
