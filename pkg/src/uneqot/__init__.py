"""Optimal transport from multi-dimensional sources onto one-dimensional targets."""

from .best_reply import (BestReplySolver, InteractionSpec, best_response, estimate_hypotheses, first_variation,
                         generalized_nestedness_check, solve_fixed_point, w1)
from .congestion import (CongestionSolver, CongestionSpec, appendix_refined_threshold,
                         congestion_nestedness_threshold, density_bounds, highdim_congestion_check, kv_invert,
                         solve_congestion_bvp)
from .core import k_range, level_integral, mass_to_k, superlevel_mass
from .costs import CostModel
from .exceptions import ConfigurationError, DivergenceError, HypothesisViolation, NumericalError, UneqOTError
from .hedonic import (HedonicEquilibrium, HedonicInstance, HedonicSolution, boundary_vanishing_check,
                      differential_condition, hedonic_nestedness_check, solve_M)
from .measures import DiscreteMeasure, SourceMeasure, TargetDensity
from .nested import (KProfile, NestedTransport, check_nestedness, density_from_k, minimal_mass_difference,
                     nestedness_by_bounds, solve_k_profile, solve_nested, transport_cost, transport_map)
from .oracle import DiscreteOTProblem, mc_mass, solve_discrete_ot

__version__ = "0.1.0"

__all__ = [
    "BestReplySolver", "InteractionSpec", "best_response", "estimate_hypotheses", "first_variation",
    "generalized_nestedness_check", "solve_fixed_point", "w1",
    "CongestionSolver", "CongestionSpec", "appendix_refined_threshold", "congestion_nestedness_threshold",
    "density_bounds", "highdim_congestion_check", "kv_invert", "solve_congestion_bvp",
    "k_range", "level_integral", "mass_to_k", "superlevel_mass",
    "CostModel",
    "ConfigurationError", "DivergenceError", "HypothesisViolation", "NumericalError", "UneqOTError",
    "HedonicEquilibrium", "HedonicInstance", "HedonicSolution", "boundary_vanishing_check",
    "differential_condition", "hedonic_nestedness_check", "solve_M",
    "DiscreteMeasure", "SourceMeasure", "TargetDensity",
    "KProfile", "NestedTransport", "check_nestedness", "density_from_k", "minimal_mass_difference",
    "nestedness_by_bounds", "solve_k_profile", "solve_nested", "transport_cost", "transport_map",
    "DiscreteOTProblem", "mc_mass", "solve_discrete_ot",
]
