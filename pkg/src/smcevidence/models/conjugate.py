"""Conjugate Gaussian model with a closed-form evidence."""

from __future__ import annotations

import numpy as np

from ..kernels import BlockSpec
from .base import TargetModel

LOG_2PI = float(np.log(2 * np.pi))


def conj_gaussian_log_evidence(y, m0: float = 0.0, s0_sq: float = 1.0,
                               sigma0_sq: float = 1.0) -> float:
    """Log marginal likelihood of ``y`` under ``y_i ~ N(mu, sigma0_sq)``,
    ``mu ~ N(m0, s0_sq)``.

    A two-dimensional ``y`` of shape ``(n, d)`` is treated as ``d`` independent
    coordinates each with its own mean.
    """
    if s0_sq <= 0 or sigma0_sq <= 0:
        raise ValueError("variances must be positive")
    y = np.asarray(y, dtype=float)
    if y.ndim == 1:
        y = y[:, None]
    n = y.shape[0]
    if n == 0:
        return 0.0
    ybar = y.mean(axis=0)
    ss = np.sum((y - ybar) ** 2, axis=0)
    out = (-0.5 * n * (LOG_2PI + np.log(sigma0_sq))
           - 0.5 * np.log1p(n * s0_sq / sigma0_sq)
           - 0.5 * (ss / sigma0_sq + n * (ybar - m0) ** 2 / (sigma0_sq + n * s0_sq)))
    return float(np.sum(out))


class ConjugateGaussian(TargetModel):
    """Independent Gaussian means with known noise variance.

    Parameters are the ``d`` means; data ``y`` has shape ``(n, d)``.
    """

    model_ids = (0,)

    def __init__(self, y, m0: float = 0.0, s0_sq: float = 1.0, sigma0_sq: float = 1.0):
        if s0_sq <= 0 or sigma0_sq <= 0:
            raise ValueError("variances must be positive")
        y = np.asarray(y, dtype=float)
        self.y = y[:, None] if y.ndim == 1 else y
        self.m0 = float(m0)
        self.s0_sq = float(s0_sq)
        self.sigma0_sq = float(sigma0_sq)
        self.n, self.d = self.y.shape
        self._sum = self.y.sum(axis=0)
        self._sumsq = float(np.sum(self.y ** 2))

    def dim(self, k=0):
        return self.d

    def blocks(self, k=0):
        return [BlockSpec("mu", tuple(range(self.d)), "identity")]

    def sample_prior(self, rng, n, k=0):
        return self.m0 + np.sqrt(self.s0_sq) * rng.standard_normal((n, self.d))

    def log_prior(self, x, k=0):
        x = np.asarray(x, dtype=float)
        return np.sum(-0.5 * (LOG_2PI + np.log(self.s0_sq))
                      - 0.5 * (x - self.m0) ** 2 / self.s0_sq, axis=1)

    def log_likelihood(self, x, k=0):
        x = np.asarray(x, dtype=float)
        # sum_i (y_i - mu)^2 expanded to avoid an (N, n, d) temporary
        quad = self._sumsq - 2 * x @ self._sum + self.n * np.sum(x ** 2, axis=1)
        return (-0.5 * self.n * self.d * (LOG_2PI + np.log(self.sigma0_sq))
                - 0.5 * quad / self.sigma0_sq)

    def log_evidence(self, k=0):
        return conj_gaussian_log_evidence(self.y, self.m0, self.s0_sq, self.sigma0_sq)

    def posterior(self, alpha: float = 1.0):
        """Mean vector and variance of the tempered posterior of the means."""
        prec = 1.0 / self.s0_sq + alpha * self.n / self.sigma0_sq
        mean = (self.m0 / self.s0_sq + alpha * self._sum / self.sigma0_sq) / prec
        return mean, 1.0 / prec

    def sample_posterior(self, rng, n, alpha: float = 1.0):
        mean, var = self.posterior(alpha)
        return mean + np.sqrt(var) * rng.standard_normal((n, self.d))
