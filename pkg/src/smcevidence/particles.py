"""Weighted particle populations, log-space weight bookkeeping and resampling."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

VARIANCE_FLOOR = 1e-12


class DegenerateWeightsError(RuntimeError):
    """Raised when a weight vector carries no mass."""


class TransformDomainError(ValueError):
    """Raised when a coordinate transform is applied outside its domain."""


def make_rng(seed: int, *stream: int) -> np.random.Generator:
    """Generator for the stream identified by ``(seed, *stream)``.

    Identical keys reproduce identical draws; distinct keys give
    statistically independent streams (``SeedSequence`` spawn keys).
    """
    key = tuple(int(s) for s in stream)
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=key))


@dataclass
class ParticleSystem:
    """A population of ``N`` weighted particles.

    States are stored row-wise in ``x`` with shape ``(N, D)``; for families of
    models with different dimensions the rows are padded and ``model`` holds
    the label that determines how many leading columns are meaningful.
    Log-likelihood and log-prior values at the current states are cached.
    """

    x: np.ndarray
    model: np.ndarray
    log_weights: np.ndarray
    loglik: np.ndarray
    logprior: np.ndarray
    last_log_inc: np.ndarray = field(default=None)

    def __post_init__(self):
        n = self.x.shape[0]
        if n < 1:
            raise ValueError("particle system needs at least one particle")
        if self.last_log_inc is None:
            self.last_log_inc = np.zeros(n)

    @property
    def size(self) -> int:
        return self.x.shape[0]

    @property
    def weights(self) -> np.ndarray:
        return np.exp(self.log_weights)

    def take(self, idx: np.ndarray) -> "ParticleSystem":
        """Copy of the system restricted to rows ``idx`` with uniform weights."""
        n = len(idx)
        return ParticleSystem(
            x=self.x[idx].copy(),
            model=self.model[idx].copy(),
            log_weights=np.full(n, -np.log(n)),
            loglik=self.loglik[idx].copy(),
            logprior=self.logprior[idx].copy(),
            last_log_inc=self.last_log_inc[idx].copy(),
        )

    def copy(self) -> "ParticleSystem":
        return ParticleSystem(
            self.x.copy(), self.model.copy(), self.log_weights.copy(),
            self.loglik.copy(), self.logprior.copy(), self.last_log_inc.copy(),
        )


def log_sum_exp(a: np.ndarray) -> float:
    a = np.asarray(a, dtype=float)
    m = np.max(a)
    if m == -np.inf:
        return -np.inf
    return float(m + np.log(np.sum(np.exp(a - m))))


def normalize_log_weights(raw) -> tuple[np.ndarray, float]:
    """Normalize unnormalized log weights.

    Returns the normalized log weights and ``log(sum(exp(raw)))``, both
    computed with a max shift so that large magnitudes do not overflow.
    NaN entries are treated as zero weight.
    """
    raw = np.asarray(raw, dtype=float)
    if raw.size == 0:
        raise ValueError("empty weight vector")
    raw = np.where(np.isnan(raw), -np.inf, raw)
    m = np.max(raw)
    if not np.isfinite(m):
        raise DegenerateWeightsError("degenerate weights: no finite log weight")
    log_sum = m + np.log(np.sum(np.exp(raw - m)))
    return raw - log_sum, float(log_sum)


def _products(W_prev, w_inc):
    W_prev = np.asarray(W_prev, dtype=float)
    w_inc = np.asarray(w_inc, dtype=float)
    p = W_prev * w_inc
    s = p.sum()
    if not s > 0:
        raise DegenerateWeightsError("degenerate weights: all weight products are zero")
    return W_prev, w_inc, p, s


def ess(W_prev, w_inc) -> float:
    """Effective sample size of the reweighted population."""
    _, _, p, s = _products(W_prev, w_inc)
    return float(s * s / np.sum(p * p))


def cess(W_prev, w_inc) -> float:
    """Conditional effective sample size of an incremental reweighting."""
    W, w, p, s = _products(W_prev, w_inc)
    return float(s * s / (np.sum(p * w) / W.size))


def log_ess(log_W_prev, log_w_inc) -> float:
    """ESS computed from log quantities, robust to the scale of ``log_w_inc``."""
    a = np.asarray(log_W_prev, dtype=float) + np.asarray(log_w_inc, dtype=float)
    la = log_sum_exp(a)
    if la == -np.inf:
        raise DegenerateWeightsError("degenerate weights: all weight products are zero")
    return float(np.exp(2 * la - log_sum_exp(2 * a)))


def log_cess(log_W_prev, log_w_inc) -> float:
    """CESS computed from log quantities."""
    log_W_prev = np.asarray(log_W_prev, dtype=float)
    log_w_inc = np.asarray(log_w_inc, dtype=float)
    la = log_sum_exp(log_W_prev + log_w_inc)
    if la == -np.inf:
        raise DegenerateWeightsError("degenerate weights: all weight products are zero")
    lb = log_sum_exp(log_W_prev + 2 * log_w_inc)
    return float(np.exp(2 * la - lb + np.log(log_W_prev.size)))


def resample_indices(weights, rng: np.random.Generator, n: int | None = None,
                     scheme: str = "multinomial") -> np.ndarray:
    """Ancestor indices drawn from normalized ``weights``.

    ``multinomial`` draws i.i.d. ancestors (sorted, as produced by a single
    multinomial count vector); ``systematic`` uses one shared uniform.
    """
    w = np.asarray(weights, dtype=float)
    if n is None:
        n = w.size
    total = w.sum()
    if not total > 0:
        raise DegenerateWeightsError("degenerate weights: cannot resample")
    w = w / total
    if scheme == "multinomial":
        counts = rng.multinomial(n, w)
        return np.repeat(np.arange(w.size), counts)
    if scheme == "systematic":
        u = (rng.random() + np.arange(n)) / n
        cdf = np.cumsum(w)
        cdf[-1] = 1.0
        return np.searchsorted(cdf, u, side="right").clip(max=w.size - 1)
    raise ValueError(f"unknown resampling scheme {scheme!r}")


def resample_multinomial(sys: ParticleSystem, rng: np.random.Generator) -> ParticleSystem:
    """Multinomial resampling; the returned system has uniform weights."""
    idx = resample_indices(sys.weights, rng, scheme="multinomial")
    return sys.take(idx)


def resample_systematic(sys: ParticleSystem, rng: np.random.Generator) -> ParticleSystem:
    idx = resample_indices(sys.weights, rng, scheme="systematic")
    return sys.take(idx)


def resample(sys: ParticleSystem, rng: np.random.Generator,
             scheme: str = "multinomial") -> ParticleSystem:
    return sys.take(resample_indices(sys.weights, rng, scheme=scheme))


def weighted_moments(values: np.ndarray, weights: np.ndarray,
                     floor: float = VARIANCE_FLOOR) -> tuple[np.ndarray, np.ndarray]:
    """Self-normalized weighted mean and population variance per column.

    ``values`` has shape ``(N,)`` or ``(N, d)``; the variance is floored at
    ``floor``.
    """
    v = np.asarray(values, dtype=float)
    w = np.asarray(weights, dtype=float)
    w = w / w.sum()
    if v.ndim == 1:
        v = v[:, None]
    if not np.all(np.isfinite(v[w > 0])):
        raise TransformDomainError("transform domain: non-finite transformed coordinate")
    mean = w @ v
    var = w @ (v - mean) ** 2
    return mean, np.maximum(var, floor)
