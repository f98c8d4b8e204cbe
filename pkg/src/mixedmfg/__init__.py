"""Linear-quadratic mean-field equilibria with partial altruism (one
population, weight ``lam``) or with a mix of cooperative and non-cooperative
groups (proportion ``p``)."""

from .conditions import ConditionReport, check_mi_condition, check_mp_assumption
from .equilibrium import (FeedbackPolicy, ResidualReport, best_response_mi, best_response_mp_nc,
                          hamiltonian_minimizer_check, solve_mi, solve_mp, verify_drift_identity_mi,
                          verify_drift_identity_mp)
from .estimators import MixedIndividualMFG, MixedPopulationMFG
from .params import (GroupParams, MIParams, MPMatrices, MPParams, TimeGrid, ValidationError,
                     build_mp_matrices, validate_mi, validate_mp)
from .riccati import (FBSDE, LITERAL, RiccatiBlowUpError, RiccatiSolutionMI, RiccatiSolutionMP,
                      closed_form_A, integrate_A_mi, integrate_mi_system, integrate_mp_system)
from .simulation import (EpsilonEstimate, SimConfig, SimulationError, SimulationResult,
                         estimate_epsilon_nash, evaluate_cost_deterministic, simulate_mi, simulate_mp)

__version__ = "0.1.0"

__all__ = [
    "ConditionReport", "EpsilonEstimate", "FBSDE", "FeedbackPolicy", "GroupParams", "LITERAL",
    "MIParams", "MPMatrices", "MPParams", "MixedIndividualMFG", "MixedPopulationMFG",
    "ResidualReport", "RiccatiBlowUpError", "RiccatiSolutionMI", "RiccatiSolutionMP", "SimConfig",
    "SimulationError", "SimulationResult", "TimeGrid", "ValidationError", "best_response_mi",
    "best_response_mp_nc", "build_mp_matrices", "check_mi_condition", "check_mp_assumption",
    "closed_form_A", "estimate_epsilon_nash", "evaluate_cost_deterministic",
    "hamiltonian_minimizer_check", "integrate_A_mi", "integrate_mi_system", "integrate_mp_system",
    "simulate_mi", "simulate_mp", "solve_mi", "solve_mp", "validate_mi", "validate_mp",
    "verify_drift_identity_mi", "verify_drift_identity_mp",
]
