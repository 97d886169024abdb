"""The target model interface shared by all samplers."""

from __future__ import annotations

import numpy as np


class TargetModel:
    """Base class for model definitions.

    A model (or family of models indexed by integer labels in ``model_ids``)
    provides, for each label ``k``: the parameter dimension, the block layout
    used by the Metropolis-Hastings kernel, a prior sampler and vectorized
    log-prior and log-likelihood evaluations on arrays of shape ``(n, dim(k))``.
    Families whose members differ in dimension store states padded to
    ``max_dim`` columns.
    """

    model_ids: tuple = (0,)

    def dim(self, k: int) -> int:
        raise NotImplementedError

    @property
    def max_dim(self) -> int:
        return max(self.dim(k) for k in self.model_ids)

    def blocks(self, k: int):
        raise NotImplementedError

    def sample_prior(self, rng: np.random.Generator, n: int, k: int) -> np.ndarray:
        raise NotImplementedError

    def log_prior(self, x: np.ndarray, k: int) -> np.ndarray:
        raise NotImplementedError

    def log_likelihood(self, x: np.ndarray, k: int) -> np.ndarray:
        raise NotImplementedError

    def log_model_prior(self) -> dict:
        """Log prior mass of every model label (uniform by default)."""
        n = len(self.model_ids)
        return {int(k): -float(np.log(n)) for k in self.model_ids}

    def log_evidence(self, k: int) -> float | None:
        """Analytic log evidence when available."""
        return None

    def rj_move(self, sys, path, alpha, rng, allowed=None):
        """Trans-dimensional move; models without one leave ``sys`` unchanged."""
        return None

    def restrict(self, ids):
        """View of the family limited to ``ids``."""
        return Restricted(self, ids)


class Restricted(TargetModel):
    """A sub-family of another model sharing its implementation."""

    def __init__(self, base: TargetModel, ids):
        self.base = base
        self.model_ids = tuple(int(k) for k in ids)
        for k in self.model_ids:
            if k not in base.model_ids:
                raise ValueError(f"model {k} not in {base.model_ids}")

    def __getattr__(self, name):
        return getattr(self.base, name)

    @property
    def max_dim(self) -> int:
        return self.base.max_dim

    def dim(self, k):
        return self.base.dim(k)

    def blocks(self, k):
        return self.base.blocks(k)

    def sample_prior(self, rng, n, k):
        return self.base.sample_prior(rng, n, k)

    def log_prior(self, x, k):
        return self.base.log_prior(x, k)

    def log_likelihood(self, x, k):
        return self.base.log_likelihood(x, k)

    def log_evidence(self, k):
        return self.base.log_evidence(k)

    def rj_move(self, sys, path, alpha, rng, allowed=None):
        allowed = self.model_ids if allowed is None else allowed
        return self.base.rj_move(sys, path, alpha, rng, allowed=allowed)


def evaluate(model: TargetModel, x: np.ndarray, labels: np.ndarray):
    """Log-likelihood and log-prior of padded states grouped by model label."""
    n = x.shape[0]
    ll = np.empty(n)
    lp = np.empty(n)
    for k in np.unique(labels):
        sel = labels == k
        d = model.dim(int(k))
        xs = x[sel, :d]
        lp[sel] = model.log_prior(xs, int(k))
        ll[sel] = model.log_likelihood(xs, int(k))
    return ll, lp


def sample_family(model: TargetModel, rng: np.random.Generator, n: int,
                  probs: dict | None = None):
    """Draw labels from ``probs`` (default: the model prior) then parameters.

    Returns padded states of shape ``(n, max_dim)`` and labels.
    """
    ids = list(model.model_ids)
    if probs is None:
        lp = model.log_model_prior()
        p = np.exp([lp[k] for k in ids])
    else:
        p = np.array([probs.get(k, 0.0) for k in ids], dtype=float)
    p = p / p.sum()
    if len(ids) == 1:
        labels = np.full(n, ids[0], dtype=int)
    else:
        labels = np.asarray(ids)[rng.choice(len(ids), size=n, p=p)]
    x = np.zeros((n, model.max_dim))
    for k in ids:
        sel = np.flatnonzero(labels == k)
        if sel.size:
            x[sel, :model.dim(k)] = model.sample_prior(rng, sel.size, k)
    return x, labels
