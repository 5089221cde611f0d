"""Online GP regression with Hellinger-budgeted dictionary compression,
and the uncompressed sequential GP used as the accuracy baseline."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Literal

import numpy as np

from .compression import dhmp
from .errors import InvalidArgumentError
from .gp_core import Dictionary, KernelParams, PredictiveGaussian, posterior_predict


@dataclass(frozen=True)
class BudgetSchedule:
    """Compression budget per step: ``eps0`` (constant) or ``eps0 / t`` (diminishing)."""

    kind: Literal["constant", "diminishing"] = "constant"
    eps0: float = 1e-3

    def __post_init__(self):
        if self.kind not in ("constant", "diminishing"):
            raise InvalidArgumentError(f"unknown schedule kind {self.kind!r}")
        if not self.eps0 >= 0:
            raise InvalidArgumentError(f"eps0 must be nonnegative, got {self.eps0}")


def budget_at(schedule: BudgetSchedule, t: int) -> float:
    if t < 1:
        raise InvalidArgumentError(f"step index must be >= 1, got {t}")
    if schedule.kind == "constant":
        return schedule.eps0
    return schedule.eps0 / t


@dataclass(frozen=True)
class StepRecord:
    t: int
    model_order: int
    eps_t: float
    step_hellinger: float
    smse: float | None = None
    msll: float | None = None
    elapsed_micros: int | None = None


@dataclass(frozen=True)
class PogState:
    """Immutable snapshot of the online learner after ``step_count`` samples.

    ``predictive`` is the predictive at the latest input before any
    compression (what the learner forecast for that sample);
    ``last_predictive`` is the same after compression, before appending.
    """

    dictionary: Dictionary
    params: KernelParams
    schedule: BudgetSchedule
    step_count: int = 0
    predictive: PredictiveGaussian | None = None
    last_predictive: PredictiveGaussian | None = None
    records: tuple[StepRecord, ...] = field(default=(), repr=False)
    reference_grid: np.ndarray | None = field(default=None, repr=False)
    loo_method: str = "rebuild"
    threads: int = 1

    @classmethod
    def initial(
        cls,
        params: KernelParams,
        schedule: BudgetSchedule,
        reference_grid=None,
        loo_method: str = "rebuild",
        threads: int = 1,
    ) -> "PogState":
        grid = None
        if reference_grid is not None:
            grid = np.atleast_2d(np.asarray(reference_grid, dtype=float))
            if grid.shape[1] != params.dim:
                raise InvalidArgumentError(
                    f"reference grid has {grid.shape[1]} features, kernel expects {params.dim}"
                )
            grid.setflags(write=False)
        return cls(Dictionary.empty(params), params, schedule, reference_grid=grid,
                   loo_method=loo_method, threads=threads)

    @property
    def model_order(self) -> int:
        return self.dictionary.model_order


def _point(x, params: KernelParams) -> np.ndarray:
    x = np.asarray(x, dtype=float).reshape(1, -1)
    if x.shape[1] != params.dim:
        raise InvalidArgumentError(f"sample has {x.shape[1]} features, kernel expects {params.dim}")
    return x


def pog_step(state: PogState, x, y: float) -> PogState:
    """Advance the learner by one sample.

    Predict at ``x`` from the current dictionary, compress it with budget
    ``eps_t`` against the reference (``x`` itself, or the configured grid),
    then append ``(x, y)``. The newest sample is always admitted.
    """
    params = state.params
    xr = _point(x, params)
    t = state.step_count + 1
    eps_t = budget_at(state.schedule, t)
    reference = xr if state.reference_grid is None else state.reference_grid

    predictive = posterior_predict(state.dictionary, params, xr)
    result = dhmp(state.dictionary, params, reference, eps_t,
                  method=state.loo_method, threads=state.threads)
    if state.reference_grid is None:
        last = result.predictive
    else:
        last = posterior_predict(result.dictionary, params, xr)
    dictionary = result.dictionary.append(xr[0], y, index=t)
    record = StepRecord(t, dictionary.model_order, eps_t, result.achieved_distance)
    return replace(
        state,
        dictionary=dictionary,
        step_count=t,
        predictive=predictive,
        last_predictive=last,
        records=state.records + (record,),
    )


def dense_step(store: Dictionary, params: KernelParams, x, y: float) -> tuple[PredictiveGaussian, Dictionary]:
    """Predict at ``x`` from every past sample, then store the sample."""
    xr = _point(x, params)
    pred = posterior_predict(store, params, xr)
    index = int(store.indices[-1]) + 1 if store.model_order else 1
    return pred, store.append(xr[0], y, index=index)
