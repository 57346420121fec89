"""Blend a sample average with a worst case over an ambiguity set.

The decision minimizes (1 - lam) times the empirical expected loss plus lam
times the worst expected loss over a set of distributions described by
partial information (mean absolute deviations, or mean and covariance).
"""

from .ambiguity import (GenericConicAmbiguity, MadAmbiguity, MixtureAmbiguity, MomentAmbiguity,
                        mad_as_generic, mad_worst_case_marginal, membership_check)
from .core import AffinePiece, DecisionSpace, PiecewiseAffineLoss, SampleSet, confidence_interval, saa_objective
from .reformulation import HOInstance, HOResult, build_ho, inner_worst_case_oracle, solve_ho
from .scenred import ReducedScenarioSet, ho_reduce, local_search_reduce, random_reduce, wasserstein_type_l
from .solver import ConicProgram, SolverSettings, solve
from .weights import (WeightPolicy, estimate_c_crossval, estimate_c_fixed, estimate_c_gap,
                      lambda_for_reduction)

__version__ = "0.1.0"

__all__ = [
    "AffinePiece", "ConicProgram", "DecisionSpace", "GenericConicAmbiguity", "HOInstance", "HOResult",
    "MadAmbiguity", "MixtureAmbiguity", "MomentAmbiguity", "PiecewiseAffineLoss", "ReducedScenarioSet",
    "SampleSet", "SolverSettings", "WeightPolicy", "build_ho", "confidence_interval", "estimate_c_crossval",
    "estimate_c_fixed", "estimate_c_gap", "ho_reduce", "inner_worst_case_oracle", "lambda_for_reduction",
    "local_search_reduce", "mad_as_generic", "mad_worst_case_marginal", "membership_check", "random_reduce",
    "saa_objective", "solve", "solve_ho", "wasserstein_type_l",
]
