"""Parsimonious online Gaussian-process regression."""

from .compression import CompressionResult, dhmp
from .errors import (
    DataError,
    InvalidArgumentError,
    NumericalFailureError,
    UnsupportedInputError,
)
from .gp_core import (
    Dictionary,
    KernelParams,
    PredictiveGaussian,
    cholesky_factor,
    kernel_eval,
    kernel_matrix,
    log_marginal_likelihood,
    posterior_predict,
    predict_marginals,
    tune_hyperparameters,
)
from .hellinger import hellinger_gaussian, hellinger_quadrature, hellinger_univariate
from .metrics import EvalReport, evaluate
from .pog import BudgetSchedule, PogState, StepRecord, budget_at, dense_step, pog_step

__version__ = "0.1.0"

__all__ = [
    "BudgetSchedule", "CompressionResult", "DataError", "Dictionary", "EvalReport",
    "InvalidArgumentError", "KernelParams", "NumericalFailureError", "PogState",
    "PredictiveGaussian", "StepRecord", "UnsupportedInputError", "budget_at",
    "cholesky_factor", "dense_step", "dhmp", "evaluate", "hellinger_gaussian",
    "hellinger_quadrature", "hellinger_univariate", "kernel_eval", "kernel_matrix",
    "log_marginal_likelihood", "pog_step", "posterior_predict", "predict_marginals",
    "tune_hyperparameters",
]
