"""Test-set scoring: standardized mean squared error and mean standardized log loss."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgumentError
from .gp_core import Dictionary, KernelParams, predict_marginals


@dataclass(frozen=True)
class EvalReport:
    smse: float
    msll: float
    n_test: int
    train_target_variance: float


def scores(y, mean, var, train_var: float) -> tuple[float, float]:
    """SMSE and MSLL from per-point predictive means and variances.

    MSLL is ``mean(0.5 * (err**2 / var + log var))``; the ``log 2 pi`` term is left out.
    """
    y = np.asarray(y, dtype=float).ravel()
    mean = np.asarray(mean, dtype=float).ravel()
    var = np.asarray(var, dtype=float).ravel()
    if not train_var > 0:
        raise InvalidArgumentError(f"train_var must be positive, got {train_var}")
    if y.size < 1:
        raise InvalidArgumentError("need at least one test point")
    if not (y.size == mean.size == var.size):
        raise InvalidArgumentError("y, mean and var must have the same length")
    sq = (y - mean) ** 2
    # np.sum uses pairwise summation
    smse = float(np.sum(sq / train_var) / y.size)
    msll = float(np.sum(sq / var + np.log(var)) / (2 * y.size))
    return smse, msll


def evaluate(dictionary: Dictionary, params: KernelParams, X_test, y_test, train_var: float) -> EvalReport:
    """Score the per-point predictive of ``dictionary`` on a test set."""
    if not train_var > 0:
        raise InvalidArgumentError(f"train_var must be positive, got {train_var}")
    mean, var = predict_marginals(dictionary, params, X_test)
    smse, msll = scores(y_test, mean, var, train_var)
    return EvalReport(smse, msll, int(np.size(y_test)), float(train_var))
