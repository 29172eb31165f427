"""fblab: a numerical laboratory for planar free boundaries.

Computes discrete minimizers of one-phase, two-phase and multiphase
eigenvalue functionals and turns the analytic machinery around them
(boundary adjusted energies, excess, epiperimetric ratios, blow-up
classification, flatness and oscillation estimates) into executable,
testable diagnostics.
"""

from .energy import EnergyBreakdown, energy_J, excess, one_hom_extension, rescale, weiss
from .epiperimetric import EpiReport, HalfPlaneConstraint, best_competitor, epi_ratio
from .errors import DomainOverflow, FBLabError, NumericalFailure, RejectedInput
from .geometry import circle_trace, freeze_pullback, matrix_sqrt, straighten_boundary
from .grids import CircleTrace, CoeffData, HalfPlaneModel, ScalarField2D, unit_field
from .monotonicity import (WeissProfile, check_monotone, decay_certificate,
                           derivative_identity_residual, excess_L2_bound,
                           geometric_ladder, weiss_profile)
from .multiphase import MultiphaseState, solve_multiphase
from .solvers import (SolveConfig, nondegeneracy_check, solve_eigen,
                      solve_one_phase, solve_two_phase, verify_almost_min)

__version__ = "0.1.0"
