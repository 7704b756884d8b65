"""Minimum probability of lifetime ruin under drift ambiguity.

Robust HJB solver, closed forms for the limiting regimes, a small-``eps``
expansion, fixed-policy evaluation and a Monte Carlo cross-check.
"""

from .asymptotics import ExpansionCoefficients, expansion, expansion_coefficients, f0, f1, f1_ode_residual
from .closed_forms import (
    pi_nonrobust,
    pi_perpetual,
    psi_nonrobust,
    psi_perpetual,
    psi_worstcase,
    theta_perpetual,
)
from .errors import (
    ConvexityLoss,
    DegenerateDenominator,
    InadmissiblePolicy,
    InconsistentConcavity,
    NonConvergence,
    ParameterError,
    RobustRuinError,
)
from .hjb import ValueSolution, boundary_slope, extract_policy, inflection_point, residual, solve
from .model import DerivedConstants, Grid, ModelParams, derive, make_grid, validate
from .policy_eval import PolicyTable, PolicyValue, deviation_table, evaluate_fixed_policy, max_deviation

__all__ = [
    "ConvexityLoss",
    "DegenerateDenominator",
    "DerivedConstants",
    "ExpansionCoefficients",
    "Grid",
    "InadmissiblePolicy",
    "InconsistentConcavity",
    "ModelParams",
    "NonConvergence",
    "ParameterError",
    "PolicyTable",
    "PolicyValue",
    "RobustRuinError",
    "ValueSolution",
    "boundary_slope",
    "derive",
    "deviation_table",
    "evaluate_fixed_policy",
    "expansion",
    "expansion_coefficients",
    "extract_policy",
    "f0",
    "f1",
    "f1_ode_residual",
    "inflection_point",
    "make_grid",
    "max_deviation",
    "pi_nonrobust",
    "pi_perpetual",
    "psi_nonrobust",
    "psi_perpetual",
    "psi_worstcase",
    "residual",
    "solve",
    "theta_perpetual",
    "validate",
]
