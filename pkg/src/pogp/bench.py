"""Experiment harness: CSV ingestion, standardization, and the streaming
train/evaluate loop that writes per-step telemetry."""

from __future__ import annotations

import csv
import json
import logging
import math
import time
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Iterable

import numpy as np

from .errors import DataError, InvalidArgumentError
from .gp_core import Dictionary, KernelParams, predict_marginals, tune_hyperparameters
from .metrics import EvalReport, scores
from .pog import BudgetSchedule, PogState, StepRecord, budget_at, dense_step, pog_step

log = logging.getLogger(__name__)

CSV_HEADER = ("t", "model_order", "eps_t", "step_hellinger", "smse", "msll", "elapsed_micros")
FINAL_WINDOW = 100


def _parse_row(row: list[str], lineno: int) -> list[float]:
    out = []
    for cell in row:
        try:
            out.append(float(cell.strip()))
        except ValueError:
            raise DataError(f"line {lineno}: non-numeric cell {cell!r}") from None
    return out


def read_matrix(path, has_header: bool | None = None) -> np.ndarray:
    """Read a numeric CSV into an ``(n, k)`` array.

    ``has_header=None`` treats the first row as a header only if it does not parse.
    """
    path = Path(path)
    try:
        with path.open(newline="") as fh:
            rows = [(i, r) for i, r in enumerate(csv.reader(fh), start=1) if any(c.strip() for c in r)]
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    if rows and has_header is None:
        try:
            _parse_row(rows[0][1], rows[0][0])
            has_header = False
        except DataError:
            has_header = True
    if has_header and rows:
        rows = rows[1:]
    if not rows:
        raise DataError(f"{path}: no data rows")
    width = len(rows[0][1])
    data = []
    for lineno, row in rows:
        if len(row) != width:
            raise DataError(f"line {lineno}: expected {width} columns, found {len(row)}")
        data.append(_parse_row(row, lineno))
    return np.asarray(data, dtype=float)


def load_dataset(path, has_header: bool | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Features are every column but the last; the last column is the target."""
    M = read_matrix(path, has_header)
    if M.shape[1] < 2:
        raise DataError(f"{path}: need at least one feature column and a target column")
    return M[:, :-1], M[:, -1]


def standardize(X_train, X_test=None):
    """Scale features with training-set mean and population std.

    Returns ``(X_train_scaled, X_test_scaled, mean, scale)``; constant columns
    keep scale 1.
    """
    X_train = np.asarray(X_train, dtype=float)
    if X_train.shape[0] == 0:
        raise InvalidArgumentError("training set is empty")
    mean = X_train.mean(axis=0)
    scale = X_train.std(axis=0)
    const = scale <= 0
    if np.any(const):
        warnings.warn(f"constant feature column(s) {np.flatnonzero(const).tolist()} left unscaled",
                      stacklevel=2)
        scale = np.where(const, 1.0, scale)
        mean = np.where(const, 0.0, mean)
    Xt = None if X_test is None else (np.asarray(X_test, dtype=float) - mean) / scale
    return (X_train - mean) / scale, Xt, mean, scale


def make_sine_stream(n: int, seed: int, noise_var: float = 0.01, cycles: float = 3.0):
    """``x ~ U[0, 1]``, ``y = sin(2 pi cycles x) + N(0, noise_var)``; returns ``(X, y)``."""
    rng = np.random.default_rng(seed)
    x = rng.uniform(0.0, 1.0, n)
    y = np.sin(2 * np.pi * cycles * x) + rng.normal(0.0, math.sqrt(noise_var), n)
    return x[:, None], y


@dataclass
class ExperimentConfig:
    data_path: str
    output_path: str
    test_path: str | None = None
    split_fraction: float | None = None
    algo: str = "pog"
    eps0: float = 1e-3
    schedule_kind: str = "constant"
    kernel: dict | None = None
    tune_subset_size: int = 200
    seed: int = 42
    eval_every: int = 50
    ref_mode: str = "newest"
    standardize_features: bool = False
    standardize_targets: bool = False
    shuffle: bool = False
    epochs: int = 1
    threads: int = 1
    loo_method: str = "fast"
    timing: bool = False
    has_header: bool | None = None

    def validate(self) -> None:
        if self.algo not in ("pog", "dense"):
            raise InvalidArgumentError(f"algo must be 'pog' or 'dense', got {self.algo!r}")
        if (self.test_path is None) == (self.split_fraction is None):
            raise InvalidArgumentError("give exactly one of a test file or a split fraction")
        if self.split_fraction is not None and not 0 < self.split_fraction < 1:
            raise InvalidArgumentError(f"split fraction must be in (0, 1), got {self.split_fraction}")
        if self.eval_every < 1:
            raise InvalidArgumentError("eval_every must be >= 1")
        if self.epochs < 1:
            raise InvalidArgumentError("epochs must be >= 1")
        if self.threads < 1:
            raise InvalidArgumentError("threads must be >= 1")
        if not self.eps0 >= 0:
            raise InvalidArgumentError("eps must be nonnegative")
        BudgetSchedule(self.schedule_kind, self.eps0)
        if not (self.ref_mode == "newest" or self.ref_mode.startswith("grid:")):
            raise InvalidArgumentError(f"ref mode must be 'newest' or 'grid:<csv>', got {self.ref_mode!r}")


@dataclass
class PreparedData:
    X_train: np.ndarray
    y_train: np.ndarray
    X_test: np.ndarray
    y_test: np.ndarray
    grid: np.ndarray | None = None
    target_shift: float = 0.0
    target_scale: float = 1.0


def prepare_data(config: ExperimentConfig) -> PreparedData:
    """Load, split, order and scale the data described by ``config``."""
    X, y = load_dataset(config.data_path, config.has_header)
    rng = np.random.default_rng(config.seed)
    if config.split_fraction is not None:
        perm = rng.permutation(X.shape[0])
        n_train = int(round(config.split_fraction * X.shape[0]))
        if not 0 < n_train < X.shape[0]:
            raise InvalidArgumentError("split leaves an empty train or test set")
        tr, te = perm[:n_train], perm[n_train:]
        X_train, y_train, X_test, y_test = X[tr], y[tr], X[te], y[te]
    else:
        X_test, y_test = load_dataset(config.test_path, config.has_header)
        X_train, y_train = X, y
        if X_test.shape[1] != X_train.shape[1]:
            raise DataError("test file has a different number of features than the training file")
        if config.shuffle:
            perm = rng.permutation(X_train.shape[0])
            X_train, y_train = X_train[perm], y_train[perm]

    grid = None
    if config.ref_mode.startswith("grid:"):
        grid = read_matrix(config.ref_mode[5:], config.has_header)
        if grid.shape[1] != X_train.shape[1]:
            raise DataError("reference grid has a different number of features than the data")

    if config.standardize_features:
        X_train, X_test, mean, scale = standardize(X_train, X_test)
        if grid is not None:
            grid = (grid - mean) / scale
    shift, tscale = 0.0, 1.0
    if config.standardize_targets:
        shift = float(np.mean(y_train))
        tscale = float(np.std(y_train)) or 1.0
        y_train = (y_train - shift) / tscale
        y_test = (y_test - shift) / tscale
    return PreparedData(X_train, y_train, X_test, y_test, grid, shift, tscale)


def resolve_params(config: ExperimentConfig, data: PreparedData) -> KernelParams:
    if config.kernel is not None:
        params = KernelParams.from_dict(config.kernel)
        if params.dim != data.X_train.shape[1]:
            raise InvalidArgumentError(
                f"kernel has {params.dim} lengthscales, data has {data.X_train.shape[1]} features"
            )
        return params
    subset = min(config.tune_subset_size, data.X_train.shape[0])
    params = tune_hyperparameters(data.X_train, data.y_train, subset, config.seed)
    log.info("tuned kernel on %d samples: %s", subset, params)
    return params


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


class RecordWriter:
    """Streams :class:`StepRecord` rows to CSV, flushing after each row."""

    def __init__(self, path):
        self._fh = open(path, "w", newline="")
        self._writer = csv.writer(self._fh, lineterminator="\n")
        self._writer.writerow(CSV_HEADER)

    def write(self, rec: StepRecord) -> None:
        self._writer.writerow([_fmt(getattr(rec, k)) for k in CSV_HEADER])
        self._fh.flush()

    def close(self) -> None:
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


@dataclass
class ExperimentResult:
    records: list[StepRecord]
    final: EvalReport | None
    params: KernelParams
    final_model_order: int
    predictive_variances: np.ndarray = field(repr=False, default=None)


def stream_samples(data: PreparedData, epochs: int) -> Iterable[tuple[np.ndarray, float]]:
    for _ in range(epochs):
        for i in range(data.X_train.shape[0]):
            yield data.X_train[i], float(data.y_train[i])


def run_experiment(
    config: ExperimentConfig,
    params: KernelParams | None = None,
    on_record: Callable[[StepRecord], None] | None = None,
    data: PreparedData | None = None,
) -> ExperimentResult:
    """Stream the training rows through POG or the dense baseline.

    The test set is scored every ``eval_every`` steps, and at each of the last
    ``FINAL_WINDOW`` steps; the final report averages SMSE and MSLL over that
    window. Records are passed to ``on_record`` as they are produced.
    """
    config.validate()
    if data is None:
        data = prepare_data(config)
    if params is None:
        params = resolve_params(config, data)
    train_var = float(np.var(data.y_train))
    if not train_var > 0:
        raise DataError("training targets have zero variance")

    schedule = BudgetSchedule(config.schedule_kind, config.eps0)
    total = data.X_train.shape[0] * config.epochs
    window_start = max(1, total - FINAL_WINDOW + 1)
    state = None
    store = None
    if config.algo == "pog":
        state = PogState.initial(params, schedule, data.grid, config.loo_method, config.threads)
    else:
        store = Dictionary.empty(params)

    records: list[StepRecord] = []
    window: list[tuple[float, float]] = []
    variances = []
    for t, (x, y) in enumerate(stream_samples(data, config.epochs), start=1):
        tic = time.perf_counter_ns()
        if state is not None:
            state = pog_step(state, x, y)
            rec = state.records[-1]
            variances.append(state.predictive.covariance[0, 0])
            dictionary = state.dictionary
        else:
            pred, store = dense_step(store, params, x, y)
            variances.append(pred.covariance[0, 0])
            rec = StepRecord(t, store.model_order, budget_at(schedule, t), 0.0)
            dictionary = store
        elapsed = (time.perf_counter_ns() - tic) // 1000

        do_eval = t % config.eval_every == 0
        if do_eval or t >= window_start:
            mean, var = predict_marginals(dictionary, params, data.X_test)
            variances.extend(var.tolist())
            smse, msll = scores(data.y_test, mean, var, train_var)
            if t >= window_start:
                window.append((smse, msll))
            if do_eval:
                rec = StepRecord(rec.t, rec.model_order, rec.eps_t, rec.step_hellinger, smse, msll,
                                 rec.elapsed_micros)
        if config.timing:
            rec = StepRecord(rec.t, rec.model_order, rec.eps_t, rec.step_hellinger, rec.smse,
                             rec.msll, int(elapsed))
        records.append(rec)
        if on_record is not None:
            on_record(rec)

    final = None
    if window:
        w = np.asarray(window)
        final = EvalReport(float(np.mean(w[:, 0])), float(np.mean(w[:, 1])),
                           data.X_test.shape[0], train_var)
    order = state.model_order if state is not None else store.model_order
    return ExperimentResult(records, final, params, order, np.asarray(variances))


def run_to_files(config: ExperimentConfig) -> ExperimentResult:
    """Run an experiment, writing the record CSV and a JSON sidecar next to it."""
    config.validate()
    data = prepare_data(config)
    params = resolve_params(config, data)
    with RecordWriter(config.output_path) as writer:
        result = run_experiment(config, params, writer.write, data)
    sidecar = {
        "config": asdict(config),
        "kernel": params.to_dict(),
        "n_train": int(data.X_train.shape[0]),
        "n_test": int(data.X_test.shape[0]),
        "final_model_order": result.final_model_order,
        "final": None if result.final is None else asdict(result.final),
    }
    Path(str(config.output_path) + ".json").write_text(json.dumps(sidecar, indent=2, sort_keys=True) + "\n")
    return result
