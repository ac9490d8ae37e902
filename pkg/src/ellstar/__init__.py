"""Coupled semilinear elliptic systems on grids: minimal positive
solutions by monotone iteration, extremal threshold hypersurfaces by
verdict bisection, and the principal spectral hypersurface of the
composed power-shift eigenproblem.
"""

from .mesh import (DiscreteDomain, DiscreteOperator, MMatrixError,
                   OperatorSpec, apply, assemble, build_domain)
from .linalg import (NonconvergenceError, SingularMatrixError, SolveReport,
                     SparseMatrix, green_column, smallest_eigenpair, solve,
                     transpose)
from .nonlinearity import (ConditionReport, EnvelopeFit, NonlinearMap,
                           SampleSpec, SaturationError, ShiftEval, eval_A,
                           eval_F, lower_envelope, make_example,
                           verify_conditions)
from .spectral import (ComposedOperator, SpectralPair, StabilityResult,
                       H_of, apply_T, lambda_star, stability_eigen,
                       theta_star)
from .minimal import (IterationCaps, MinimalSolveOutcome,
                      check_monotone_in_lambda, l1_norm, minimal_solution)
from .extremal import (Bracket, ExtremalProfile, ExtremalSample,
                       GreenBoundReport, RadialBoundReport,
                       StabilityProbeReport, TraceResult,
                       bracket_lambda_star, extremal_profile,
                       green_lower_bound_probe, lambda_star_bisect,
                       radial_bound_check, stability_inequality_probe,
                       trace_hypersurface)

__version__ = "0.1.0"
