"""Hellinger distance between Gaussian predictives.

The distance is ``sqrt(1 - BC)`` where ``BC`` is the Bhattacharyya coefficient,
which equals the square root of ``0.5 * integral (sqrt(p) - sqrt(q))**2``.
:func:`hellinger_quadrature` evaluates that integral numerically and serves as
a test oracle for the closed form.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.integrate import simpson
from scipy.linalg import solve_triangular

from .errors import InvalidArgumentError, UnsupportedInputError
from .gp_core import PredictiveGaussian, cholesky_factor


def _log_bc_univariate(m1, v1, m2, v2):
    s = v1 + v2
    # 0.25*log(v1) + 0.25*log(v2) - 0.5*log(s/2), written to avoid cancellation
    log_det = 0.25 * np.log1p(-((v1 - v2) / s) ** 2)
    return log_det - 0.25 * (m1 - m2) ** 2 / s


def hellinger_univariate(m1, v1, m2, v2):
    """Vectorized closed form for scalar Gaussians ``N(m, v)``."""
    log_bc = _log_bc_univariate(
        np.asarray(m1, dtype=float), np.asarray(v1, dtype=float),
        np.asarray(m2, dtype=float), np.asarray(v2, dtype=float),
    )
    return np.sqrt(np.clip(-np.expm1(log_bc), 0.0, 1.0))


def _check(g: PredictiveGaussian, name: str) -> tuple[np.ndarray, np.ndarray]:
    mu = np.asarray(g.mean, dtype=float).ravel()
    cov = np.atleast_2d(np.asarray(g.covariance, dtype=float))
    if cov.shape != (mu.size, mu.size):
        raise InvalidArgumentError(f"{name}: covariance shape {cov.shape} vs mean size {mu.size}")
    if not (np.all(np.isfinite(mu)) and np.all(np.isfinite(cov))):
        raise InvalidArgumentError(f"{name}: non-finite mean or covariance")
    return mu, cov


def hellinger_gaussian(g1: PredictiveGaussian, g2: PredictiveGaussian) -> float:
    """Closed-form Hellinger distance in ``[0, 1]`` between two Gaussians."""
    mu1, S1 = _check(g1, "g1")
    mu2, S2 = _check(g2, "g2")
    if mu1.size != mu2.size:
        raise InvalidArgumentError(f"dimension mismatch: {mu1.size} vs {mu2.size}")
    if mu1.size == 0:
        return 0.0
    if mu1.size == 1:
        if S1[0, 0] <= 0 or S2[0, 0] <= 0:
            raise InvalidArgumentError("variances must be positive")
        return float(hellinger_univariate(mu1[0], S1[0, 0], mu2[0], S2[0, 0]))
    L1, _ = cholesky_factor(0.5 * (S1 + S1.T))
    L2, _ = cholesky_factor(0.5 * (S2 + S2.T))
    Lb, _ = cholesky_factor(0.25 * (S1 + S1.T + S2 + S2.T))
    half_logdet = lambda L: float(np.sum(np.log(np.diag(L))))  # noqa: E731
    z = solve_triangular(Lb, mu1 - mu2, lower=True)
    log_bc = 0.5 * (half_logdet(L1) + half_logdet(L2)) - half_logdet(Lb) - 0.125 * float(z @ z)
    return math.sqrt(min(max(-math.expm1(log_bc), 0.0), 1.0))


QUADRATURE_NODES = 20001
QUADRATURE_NODES_2D = 2001


def _axis_grid(m1, v1, m2, v2, nodes):
    center = 0.5 * (m1 + m2)
    # std of the equal-weight mixture, so the box covers both components
    pooled = math.sqrt(0.5 * (v1 + v2) + 0.25 * (m1 - m2) ** 2)
    return np.linspace(center - 10 * pooled, center + 10 * pooled, nodes)


def _normal_pdf(x, m, v):
    return np.exp(-0.5 * (x - m) ** 2 / v) / math.sqrt(2 * math.pi * v)


def hellinger_quadrature(g1: PredictiveGaussian, g2: PredictiveGaussian) -> float:
    """Hellinger distance by direct numerical integration (test oracle).

    Integrates ``0.5 * (sqrt(p) - sqrt(q))**2`` with Simpson's rule over a box
    of +-10 pooled standard deviations. Only one- and two-dimensional
    Gaussians with diagonal covariances are supported.
    """
    mu1, S1 = _check(g1, "g1")
    mu2, S2 = _check(g2, "g2")
    r = mu1.size
    if r != mu2.size:
        raise InvalidArgumentError(f"dimension mismatch: {r} vs {mu2.size}")
    if r not in (1, 2):
        raise UnsupportedInputError(f"quadrature supports 1 or 2 dimensions, got {r}")
    for S in (S1, S2):
        if np.any(S[~np.eye(r, dtype=bool)] != 0):
            raise UnsupportedInputError("quadrature requires diagonal covariances")
    v1, v2 = np.diag(S1), np.diag(S2)
    nodes = QUADRATURE_NODES if r == 1 else QUADRATURE_NODES_2D
    axes = [_axis_grid(mu1[i], v1[i], mu2[i], v2[i], nodes) for i in range(r)]
    if r == 1:
        x = axes[0]
        p = _normal_pdf(x, mu1[0], v1[0])
        q = _normal_pdf(x, mu2[0], v2[0])
        integral = simpson(0.5 * (np.sqrt(p) - np.sqrt(q)) ** 2, x=x)
    else:
        x, y = axes
        p = _normal_pdf(x, mu1[0], v1[0])[:, None] * _normal_pdf(y, mu1[1], v1[1])[None, :]
        q = _normal_pdf(x, mu2[0], v2[0])[:, None] * _normal_pdf(y, mu2[1], v2[1])[None, :]
        inner = simpson(0.5 * (np.sqrt(p) - np.sqrt(q)) ** 2, x=y, axis=1)
        integral = simpson(inner, x=x)
    return math.sqrt(max(float(integral), 0.0))
