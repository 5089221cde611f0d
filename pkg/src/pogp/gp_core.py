"""Gaussian-process primitives: ARD kernel, jittered Cholesky, dictionaries,
predictive posterior, log marginal likelihood and hyperparameter search.

Data matrices are row-major: ``X`` has shape ``(n, p)``, one sample per row.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.linalg import solve_triangular

from .errors import InvalidArgumentError, NumericalFailureError

JITTER_LADDER = (0.0, 1e-10, 1e-8, 1e-6)
_CHUNK_ELEMS = 4_000_000


@dataclass(frozen=True)
class KernelParams:
    """Hyperparameters of the ARD Gaussian kernel plus the noise variance.

    ``k(x, x') = amplitude * exp(-0.5 * sum_i (x_i - x'_i)**2 / lengthscales_i**2)``
    """

    amplitude: float
    lengthscales: tuple[float, ...]
    noise_variance: float

    def __post_init__(self):
        ls = tuple(float(q) for q in np.atleast_1d(np.asarray(self.lengthscales, dtype=float)))
        object.__setattr__(self, "lengthscales", ls)
        object.__setattr__(self, "amplitude", float(self.amplitude))
        object.__setattr__(self, "noise_variance", float(self.noise_variance))
        if not (math.isfinite(self.amplitude) and self.amplitude > 0):
            raise InvalidArgumentError(f"amplitude must be positive, got {self.amplitude}")
        if not ls or not all(math.isfinite(q) and q > 0 for q in ls):
            raise InvalidArgumentError(f"lengthscales must be positive, got {ls}")
        if not (math.isfinite(self.noise_variance) and self.noise_variance > 0):
            raise InvalidArgumentError(
                f"noise_variance must be positive, got {self.noise_variance}"
            )

    @property
    def dim(self) -> int:
        return len(self.lengthscales)

    def to_dict(self) -> dict:
        return {
            "amplitude": self.amplitude,
            "lengthscales": list(self.lengthscales),
            "noise_variance": self.noise_variance,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "KernelParams":
        return cls(d["amplitude"], tuple(d["lengthscales"]), d["noise_variance"])


@dataclass(frozen=True)
class PredictiveGaussian:
    """Joint Gaussian predictive over ``r`` reference inputs."""

    mean: np.ndarray
    covariance: np.ndarray

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    @property
    def variances(self) -> np.ndarray:
        return np.diag(self.covariance).copy()


def _as_points(X, p: int | None = None, name: str = "X") -> np.ndarray:
    A = np.asarray(X, dtype=float)
    if A.ndim == 1:
        # a flat vector is one point when its length matches p, else a column of scalars
        A = A.reshape(1, -1) if (p is not None and A.size == p) else A.reshape(-1, 1)
    if A.ndim != 2:
        raise InvalidArgumentError(f"{name} must be 2-D (n, p), got shape {A.shape}")
    if p is not None and A.shape[0] > 0 and A.shape[1] != p:
        raise InvalidArgumentError(f"{name} has {A.shape[1]} features, kernel expects {p}")
    return A


def kernel_eval(params: KernelParams, x1, x2) -> float:
    """Kernel value between two feature vectors."""
    a = np.asarray(x1, dtype=float).ravel()
    b = np.asarray(x2, dtype=float).ravel()
    if a.size != params.dim or b.size != params.dim:
        raise InvalidArgumentError(
            f"feature dimension mismatch: {a.size}, {b.size} vs lengthscales {params.dim}"
        )
    z = (a - b) / np.asarray(params.lengthscales)
    return params.amplitude * math.exp(-0.5 * float(z @ z))


def kernel_matrix(params: KernelParams, A, B) -> np.ndarray:
    """Gram matrix ``K[i, j] = k(A[i], B[j])`` for row-major point sets."""
    A = _as_points(A, params.dim, "A")
    B = _as_points(B, params.dim, "B")
    if A.shape[0] == 0 or B.shape[0] == 0:
        return np.zeros((A.shape[0], B.shape[0]))
    ls = np.asarray(params.lengthscales)
    As = A / ls
    Bs = B / ls
    K = np.empty((A.shape[0], B.shape[0]))
    # explicit differences (no |a|^2 + |b|^2 - 2ab expansion) keep near-duplicates exact
    rows = max(1, _CHUNK_ELEMS // max(1, B.shape[0] * A.shape[1]))
    for start in range(0, A.shape[0], rows):
        diff = As[start:start + rows, None, :] - Bs[None, :, :]
        K[start:start + rows] = np.exp(-0.5 * np.einsum("ijk,ijk->ij", diff, diff))
    K *= params.amplitude
    return K


def cholesky_factor(S) -> tuple[np.ndarray, float]:
    """Lower Cholesky factor of ``S + jitter * I`` with an escalating jitter.

    Jitter steps through ``0`` and ``{1e-10, 1e-8, 1e-6} * trace(S) / n``.

    Returns
    -------
    L : ndarray
        Lower-triangular factor.
    jitter : float
        The jitter that was actually added to the diagonal.
    """
    S = np.asarray(S, dtype=float)
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise InvalidArgumentError(f"expected a square matrix, got shape {S.shape}")
    n = S.shape[0]
    if n == 0:
        return np.zeros((0, 0)), 0.0
    if not np.all(np.isfinite(S)):
        raise InvalidArgumentError("matrix has non-finite entries")
    scale = abs(np.trace(S)) / n
    if scale == 0.0:
        scale = 1.0
    for step in JITTER_LADDER:
        jitter = step * scale
        try:
            L = np.linalg.cholesky(S + jitter * np.eye(n) if jitter else S)
        except np.linalg.LinAlgError:
            continue
        if np.all(np.isfinite(L)):
            return L, jitter
    try:
        cond = np.linalg.cond(S)
    except np.linalg.LinAlgError:
        cond = float("inf")
    raise NumericalFailureError(
        f"Cholesky failed at maximum jitter {JITTER_LADDER[-1] * scale:.3g} "
        f"(n={n}, condition number {cond:.3g})"
    )


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=a.dtype if a.dtype.kind == "i" else float, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Dictionary:
    """Retained (input, target) pairs with a cached factor of ``K_DD + noise * I``.

    Instances are immutable; :meth:`append` and :meth:`remove` return new ones.
    ``indices`` holds the stream position each retained pair came from.
    """

    params: KernelParams
    inputs: np.ndarray
    targets: np.ndarray
    indices: np.ndarray
    gram: np.ndarray
    factor: np.ndarray
    jitter: float
    alpha: np.ndarray = field(repr=False)

    @classmethod
    def empty(cls, params: KernelParams) -> "Dictionary":
        return cls.build(params, np.zeros((0, params.dim)), np.zeros(0))

    @classmethod
    def build(cls, params: KernelParams, inputs, targets, indices=None, gram=None) -> "Dictionary":
        X = _as_points(inputs, params.dim, "inputs")
        if X.shape[0] == 0:
            X = np.zeros((0, params.dim))
        y = np.asarray(targets, dtype=float).ravel()
        if y.shape[0] != X.shape[0]:
            raise InvalidArgumentError(
                f"{X.shape[0]} inputs but {y.shape[0]} targets"
            )
        m = X.shape[0]
        idx = np.arange(m) if indices is None else np.asarray(indices, dtype=np.int64).ravel()
        if idx.shape[0] != m:
            raise InvalidArgumentError("indices length does not match inputs")
        K = kernel_matrix(params, X, X) if gram is None else np.asarray(gram, dtype=float)
        L, jitter = cholesky_factor(K + params.noise_variance * np.eye(m))
        if m:
            alpha = solve_triangular(L.T, solve_triangular(L, y, lower=True), lower=False)
        else:
            alpha = np.zeros(0)
        return cls(params, _frozen(X), _frozen(y), _frozen(idx), _frozen(K),
                   _frozen(L), jitter, _frozen(alpha))

    @property
    def model_order(self) -> int:
        return self.targets.shape[0]

    def __len__(self) -> int:
        return self.model_order

    def append(self, x, y: float, index: int | None = None) -> "Dictionary":
        x = np.asarray(x, dtype=float).reshape(1, -1)
        if x.shape[1] != self.params.dim:
            raise InvalidArgumentError(
                f"sample has {x.shape[1]} features, kernel expects {self.params.dim}"
            )
        m = self.model_order
        if index is None:
            index = int(self.indices[-1]) + 1 if m else 0
        k = kernel_matrix(self.params, self.inputs, x)[:, 0]
        gram = np.empty((m + 1, m + 1))
        gram[:m, :m] = self.gram
        gram[:m, m] = k
        gram[m, :m] = k
        gram[m, m] = self.params.amplitude
        return Dictionary.build(
            self.params,
            np.vstack([self.inputs, x]),
            np.append(self.targets, float(y)),
            np.append(self.indices, index),
            gram,
        )

    def subset(self, positions: Sequence[int]) -> "Dictionary":
        pos = np.asarray(positions, dtype=np.int64)
        return Dictionary.build(
            self.params,
            self.inputs[pos],
            self.targets[pos],
            self.indices[pos],
            self.gram[np.ix_(pos, pos)],
        )

    def remove(self, position: int) -> "Dictionary":
        keep = [i for i in range(self.model_order) if i != position]
        return self.subset(keep)

    def with_params(self, params: KernelParams) -> "Dictionary":
        if params == self.params:
            return self
        return Dictionary.build(params, self.inputs, self.targets, self.indices)


def posterior_predict(dictionary: Dictionary, params: KernelParams, Xstar) -> PredictiveGaussian:
    """Joint predictive of noisy targets at the rows of ``Xstar``.

    With an empty dictionary this is the prior ``N(0, K** + noise * I)``.
    """
    d = dictionary.with_params(params)
    Xs = _as_points(Xstar, params.dim, "Xstar")
    r = Xs.shape[0]
    Kss = kernel_matrix(params, Xs, Xs)
    if d.model_order == 0:
        return PredictiveGaussian(np.zeros(r), Kss + params.noise_variance * np.eye(r))
    Ksd = kernel_matrix(params, Xs, d.inputs)
    mean = Ksd @ d.alpha
    V = solve_triangular(d.factor, Ksd.T, lower=True)
    schur = Kss - V.T @ V
    schur = 0.5 * (schur + schur.T)
    diag = np.diag(schur).copy()
    np.fill_diagonal(schur, np.maximum(diag, 0.0))
    return PredictiveGaussian(mean, schur + params.noise_variance * np.eye(r))


def predict_marginals(dictionary: Dictionary, params: KernelParams, Xstar) -> tuple[np.ndarray, np.ndarray]:
    """Per-point predictive means and variances (diagonal of the joint)."""
    d = dictionary.with_params(params)
    Xs = _as_points(Xstar, params.dim, "Xstar")
    prior = np.full(Xs.shape[0], params.amplitude)
    if d.model_order == 0:
        return np.zeros(Xs.shape[0]), prior + params.noise_variance
    Ksd = kernel_matrix(params, Xs, d.inputs)
    V = solve_triangular(d.factor, Ksd.T, lower=True)
    var = np.maximum(prior - np.sum(V * V, axis=0), 0.0) + params.noise_variance
    return Ksd @ d.alpha, var


def log_marginal_likelihood(params: KernelParams, X, y) -> float:
    """``log N(y; 0, K + noise * I)`` evaluated through a Cholesky factor."""
    X = _as_points(X, params.dim, "X")
    y = np.asarray(y, dtype=float).ravel()
    n = y.shape[0]
    if n < 1:
        raise InvalidArgumentError("need at least one observation")
    if X.shape[0] != n:
        raise InvalidArgumentError(f"{X.shape[0]} inputs but {n} targets")
    K = kernel_matrix(params, X, X) + params.noise_variance * np.eye(n)
    L, _ = cholesky_factor(K)
    z = solve_triangular(L, y, lower=True)
    return float(-0.5 * z @ z - np.sum(np.log(np.diag(L))) - 0.5 * n * math.log(2 * math.pi))


STEP_FACTORS = (4.0, 2.0, 1.5, 1.1)
MAX_SWEEPS = 50
_LOG_UPPER = math.log(1e6)


def tune_hyperparameters(X, y, subset_size: int, seed: int) -> KernelParams:
    """Coordinate search in log-space maximizing the log marginal likelihood.

    Works on a seeded random subset of ``subset_size`` rows. Each sweep visits
    amplitude, every lengthscale and the noise variance in turn, tries the
    multiplicative steps ``x4, x2, x1.5, x1.1`` in both directions and keeps
    the best strictly improving move. Stops after a sweep with no move or
    after 50 sweeps.
    """
    X = _as_points(X, None, "X")
    y = np.asarray(y, dtype=float).ravel()
    n, p = X.shape
    if y.shape[0] != n:
        raise InvalidArgumentError(f"{n} inputs but {y.shape[0]} targets")
    if not 1 <= subset_size <= n:
        raise InvalidArgumentError(f"subset_size must be in [1, {n}], got {subset_size}")
    rng = np.random.default_rng(seed)
    idx = np.sort(rng.choice(n, size=subset_size, replace=False))
    Xs, ys = X[idx], y[idx]

    var_y = float(np.var(ys))
    noise_floor = 1e-6 * max(var_y, 1.0)
    std_x = np.std(Xs, axis=0)
    fixed = std_x <= 0
    if np.any(fixed):
        warnings.warn(
            f"zero-variance feature(s) {np.flatnonzero(fixed).tolist()}: lengthscale fixed at 1.0",
            stacklevel=2,
        )
    ls0 = np.where(fixed, 1.0, std_x)
    amp0 = var_y if var_y > 0 else 1.0
    theta = np.log(np.concatenate([[amp0], ls0, [max(0.1 * var_y, noise_floor)]]))
    lower = np.full(p + 2, math.log(1e-6))
    lower[-1] = math.log(noise_floor)
    upper = np.full(p + 2, _LOG_UPPER + math.log(max(var_y, 1.0)))
    free = [0] + [1 + i for i in range(p) if not fixed[i]] + [p + 1]

    def objective(th: np.ndarray) -> float:
        prm = KernelParams(math.exp(th[0]), tuple(np.exp(th[1:-1])), math.exp(th[-1]))
        try:
            return log_marginal_likelihood(prm, Xs, ys)
        except NumericalFailureError:
            return -math.inf

    best = objective(theta)
    steps = [math.log(f) for f in STEP_FACTORS]
    for _ in range(MAX_SWEEPS):
        moved = False
        for c in free:
            cand_best, cand_theta = best, None
            for s in steps:
                for sign in (1.0, -1.0):
                    th = theta.copy()
                    th[c] = min(max(th[c] + sign * s, lower[c]), upper[c])
                    if th[c] == theta[c]:
                        continue
                    val = objective(th)
                    if val > cand_best:
                        cand_best, cand_theta = val, th
            if cand_theta is not None:
                theta, best, moved = cand_theta, cand_best, True
        if not moved:
            break
    return KernelParams(math.exp(theta[0]), tuple(np.exp(theta[1:-1])), math.exp(theta[-1]))
