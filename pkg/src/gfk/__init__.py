"""Monte Carlo BSDE solver for semilinear parabolic PDEs in weighted L^2 spaces,
with a finite-difference oracle and cross-checks between the two."""

__version__ = "0.1.0"

from .weights import WeightedSpace, WeightedField, weighted_lp_norm, sample_from_weight_density
from .coefficients import CoefficientSet, Driver, validate_conditions, exp_transform, truncate_driver
from .scenarios import get_scenario, list_scenarios
from .sde import TimeGrid, simulate_forward, resimulate_from
from .bsde import solve_bsde, truncation_sweep, representation_field
from .pde import FdGrid, fd_solve, weak_form_residual
from .verification import (norm_equivalence_check, representation_error, flow_identity_check,
                           z_gradient_consistency)

__all__ = [
    "WeightedSpace", "WeightedField", "weighted_lp_norm", "sample_from_weight_density",
    "CoefficientSet", "Driver", "validate_conditions", "exp_transform", "truncate_driver",
    "get_scenario", "list_scenarios", "TimeGrid", "simulate_forward", "resimulate_from",
    "solve_bsde", "truncation_sweep", "representation_field", "FdGrid", "fd_solve",
    "weak_form_residual", "norm_equivalence_check", "representation_error",
    "flow_identity_check", "z_gradient_consistency",
]
