"""Inverse optimal control for finite-horizon linear-quadratic regulators.

Given a plant (A, B) and a sampled time-varying feedback gain K(t) on a
finite horizon, decide whether some constant pair (Q >= 0, F >= 0) makes
K the optimal LQ feedback, enumerate every such pair when one exists, and
otherwise compute the pair whose optimal gain best matches the samples in
the integrated-squared sense.
"""

from .lqr import (QuadraticCost, RiccatiSolution, StateSpaceSystem, TimeGrid,
                  feedback_from_P, simulate_closed_loop, solve_dre)
from .observation import (DerivedObservation, JamesonReport, add_noise,
                          compute_G, compute_P0, derive_observation,
                          jameson_conditions, p0_least_squares)
from .exact import (ConstancyReport, ExactResult, FeasibilityReport,
                    MembershipResult, SolutionSpace, UniquenessCertificate,
                    exact_recovery, indefinite_delta_check, interval_in_direction,
                    lmi_feasibility, membership_test, min_condition_number,
                    solution_space_structure, uniqueness_certificate)
from .approx import (ApproxRun, ApproxSolution, KktSystem, QpLmiProblem,
                     approx_recovery, assemble_Ahat, assemble_qp,
                     direct_residual_solve, forcing_channels, residual_metric,
                     solve_qp_lmi, transition_blocks)
from .sdp import ConicProblem, ConicSolution, max_slack_feasibility, solve

__version__ = "0.1.0"

__all__ = [
    "StateSpaceSystem", "QuadraticCost", "TimeGrid", "RiccatiSolution",
    "solve_dre", "feedback_from_P", "simulate_closed_loop",
    "JamesonReport", "DerivedObservation", "jameson_conditions", "compute_P0",
    "p0_least_squares", "compute_G", "derive_observation", "add_noise",
    "ExactResult", "SolutionSpace", "ConstancyReport", "FeasibilityReport",
    "MembershipResult", "UniquenessCertificate", "exact_recovery",
    "solution_space_structure", "lmi_feasibility", "interval_in_direction",
    "min_condition_number", "membership_test", "uniqueness_certificate",
    "indefinite_delta_check",
    "KktSystem", "QpLmiProblem", "ApproxSolution", "ApproxRun",
    "assemble_Ahat", "forcing_channels", "transition_blocks", "assemble_qp",
    "solve_qp_lmi", "direct_residual_solve", "residual_metric",
    "approx_recovery",
    "ConicProblem", "ConicSolution", "solve", "max_slack_feasibility",
    "__version__",
]
