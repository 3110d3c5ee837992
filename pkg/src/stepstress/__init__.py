"""Robust inference for multiple step-stress accelerated life tests.

Interval-censored one-shot device data under Weibull lifetimes with a
cumulative exposure link across stress levels. Fits minimum density power
divergence estimators (the MLE at beta = 0), builds direct and transformed
confidence intervals for parameters and lifetime characteristics, runs
robust Wald-type tests with power approximations, computes influence
diagnostics, selects the tuning parameter from data, and reproduces the
bundled simulation studies and datasets from the command line.
"""

from .errors import ConvergenceError, DataError, NumericError, StepStressError

__version__ = "0.1.0"

__all__ = [
    "ConvergenceError",
    "DataError",
    "NumericError",
    "StepStressError",
    "__version__",
]
