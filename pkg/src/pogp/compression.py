"""Destructive Hellinger matching pursuit.

Greedily drops dictionary elements whose removal perturbs the predictive at a
reference set the least, as long as the perturbation stays inside a Hellinger
ball of radius ``eps`` around the predictive of the input dictionary.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_solve

from .errors import InvalidArgumentError
from .gp_core import (
    Dictionary,
    KernelParams,
    PredictiveGaussian,
    _as_points,
    kernel_matrix,
    posterior_predict,
)
from .hellinger import hellinger_gaussian, hellinger_univariate

LOO_METHODS = ("rebuild", "fast")


@dataclass(frozen=True)
class CompressionResult:
    """Outcome of one :func:`dhmp` call.

    ``removed_indices`` are positions in the *input* dictionary, in removal
    order. ``candidate_errors_trace`` has one entry per round, listing
    ``(position, gamma)`` for every candidate evaluated in that round.
    """

    dictionary: Dictionary
    achieved_distance: float
    removed_indices: tuple[int, ...]
    candidate_errors_trace: tuple[tuple[tuple[int, float], ...], ...] = field(repr=False)
    predictive: PredictiveGaussian | None = field(default=None, repr=False)

    @property
    def n_evaluations(self) -> int:
        return sum(len(r) for r in self.candidate_errors_trace)


def _gammas_rebuild(dict_in, params, reference, keep, rho_in, pool):
    def one(j):
        sub = dict_in.subset([k for k in keep if k != j])
        return hellinger_gaussian(posterior_predict(sub, params, reference), rho_in)

    if pool is None:
        return np.array([one(j) for j in keep])
    return np.array(list(pool.map(one, keep)))


def _loo_moments(current: Dictionary, params: KernelParams, reference: np.ndarray):
    """Leave-one-out predictive means and quadratic terms from the cached factor.

    Uses ``A_{-j}^{-1} = P_{-j,-j} - P_{-j,j} P_{j,-j} / P_jj`` with ``P = A^{-1}``,
    so removing element ``j`` shifts the mean by ``-w_j alpha_j / P_jj`` and the
    explained covariance by ``-w_j w_j^T / P_jj`` where ``W = P K_{D*}``.
    """
    m = current.model_order
    P = cho_solve((current.factor, True), np.eye(m))
    P = 0.5 * (P + P.T)
    Ksd = kernel_matrix(params, reference, current.inputs)
    W = P @ Ksd.T
    pjj = np.diag(P)
    base_mean = Ksd @ current.alpha
    base_quad = Ksd @ W
    mean_shift = W * (current.alpha / pjj)[:, None]
    return base_mean, base_quad, W, pjj, mean_shift


def _gammas_fast(dict_in, params, reference, keep, rho_in):
    current = dict_in.subset(keep)
    base_mean, base_quad, W, pjj, mean_shift = _loo_moments(current, params, reference)
    Kss = kernel_matrix(params, reference, reference)
    noise = params.noise_variance
    r = reference.shape[0]
    if r == 1:
        means = base_mean[0] - mean_shift[:, 0]
        quad = base_quad[0, 0] - W[:, 0] ** 2 / pjj
        var = np.maximum(Kss[0, 0] - quad, 0.0) + noise
        return hellinger_univariate(means, var, rho_in.mean[0], rho_in.covariance[0, 0])
    out = np.empty(len(keep))
    for j in range(len(keep)):
        quad = base_quad - np.outer(W[j], W[j]) / pjj[j]
        cov = Kss - quad
        cov = 0.5 * (cov + cov.T)
        np.fill_diagonal(cov, np.maximum(np.diag(cov), 0.0))
        g = PredictiveGaussian(base_mean - mean_shift[j], cov + noise * np.eye(r))
        out[j] = hellinger_gaussian(g, rho_in)
    return out


def dhmp(
    dict_in: Dictionary,
    params: KernelParams,
    reference,
    eps: float,
    method: str = "rebuild",
    threads: int = 1,
) -> CompressionResult:
    """Prune ``dict_in`` while staying within Hellinger distance ``eps``.

    The comparison target is the predictive of ``dict_in`` at ``reference``
    and stays fixed for the whole call. Each round scores every remaining
    element by the distance obtained without it, removes the cheapest one
    (lowest position on ties) if that distance is at most ``eps``, and stops
    otherwise. A budget of exactly zero disables pruning.

    ``method="rebuild"`` refactorizes the reduced system for every candidate.
    ``method="fast"`` ranks candidates with closed-form leave-one-out updates
    and confirms the chosen one by a rebuild before accepting it.
    """
    if not eps >= 0:
        raise InvalidArgumentError(f"eps must be nonnegative, got {eps}")
    if method not in LOO_METHODS:
        raise InvalidArgumentError(f"unknown method {method!r}, expected one of {LOO_METHODS}")
    dict_in = dict_in.with_params(params)
    reference = _as_points(reference, params.dim, "reference")
    if reference.shape[0] == 0:
        raise InvalidArgumentError("reference set must be nonempty")
    rho_in = posterior_predict(dict_in, params, reference)
    if dict_in.model_order == 0 or eps == 0:
        return CompressionResult(dict_in, 0.0, (), (), rho_in)

    keep = list(range(dict_in.model_order))
    removed: list[int] = []
    trace = []
    achieved = 0.0
    current_pred = rho_in
    pool = ThreadPoolExecutor(max_workers=threads) if threads > 1 and method == "rebuild" else None
    try:
        while keep:
            if method == "rebuild":
                gammas = _gammas_rebuild(dict_in, params, reference, keep, rho_in, pool)
            else:
                gammas = _gammas_fast(dict_in, params, reference, keep, rho_in)
            trace.append(tuple((k, float(g)) for k, g in zip(keep, gammas)))
            # argmin returns the first minimum; keep is ascending so ties go to the lowest position
            best = int(np.argmin(gammas))
            gamma_star = float(gammas[best])
            j_star = keep[best]
            if gamma_star > eps:
                break
            remaining = keep[:best] + keep[best + 1:]
            pred = posterior_predict(dict_in.subset(remaining), params, reference)
            if method == "fast":
                gamma_star = hellinger_gaussian(pred, rho_in)
                if gamma_star > eps:
                    break
            keep = remaining
            removed.append(j_star)
            achieved = gamma_star
            current_pred = pred
    finally:
        if pool is not None:
            pool.shutdown()

    result = CompressionResult(
        dict_in.subset(keep) if removed else dict_in,
        achieved,
        tuple(removed),
        tuple(trace),
        current_pred,
    )
    assert result.achieved_distance <= eps
    return result
