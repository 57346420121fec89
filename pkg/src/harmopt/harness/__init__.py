"""Benchmark harness: experiment grids, scoring, figures and the CLI."""

from .evaluation import approximation_error, out_of_sample
from .experiments import (LOTSIZING_METHODS, PORTFOLIO_METHODS, ExperimentConfig, ResultRecord, ResultTable,
                          derive_seed, run_experiment, write_results)

__all__ = ["approximation_error", "out_of_sample", "ExperimentConfig", "ResultRecord", "ResultTable",
           "derive_seed", "run_experiment", "write_results", "PORTFOLIO_METHODS", "LOTSIZING_METHODS"]
