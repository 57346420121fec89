"""Out-of-sample scoring."""

from __future__ import annotations

import math

import numpy as np

from ..core import PiecewiseAffineLoss, SampleSet, saa_objective
from ..problems.lotsizing import LotSizingInstance, lotsizing_out_of_sample


def out_of_sample(model, x, test) -> float:
    """Average cost of decision ``x`` on held-out scenarios.

    ``model`` is a loss, a lot-sizing instance, or any object with an
    ``evaluate(x, samples)`` method (the portfolio problem re-optimizes tau
    there).
    """
    samples = test if isinstance(test, SampleSet) else SampleSet(np.asarray(test, float))
    if isinstance(model, PiecewiseAffineLoss):
        return saa_objective(model, x, samples)
    if isinstance(model, LotSizingInstance):
        return lotsizing_out_of_sample(model, x, samples)
    if hasattr(model, "evaluate"):
        return float(model.evaluate(x, samples))
    raise TypeError(f"cannot score decisions for {type(model).__name__}")


def approximation_error(opt_m: float, opt_star: float) -> float:
    """Relative gap in percent."""
    if opt_star == 0 or not math.isfinite(opt_star):
        raise ValueError("the reference optimum must be finite and nonzero")
    return abs(opt_m - opt_star) / abs(opt_star) * 100.0
