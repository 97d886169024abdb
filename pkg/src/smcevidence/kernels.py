"""Blockwise random-walk Metropolis-Hastings kernels on transformed coordinates."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .particles import VARIANCE_FLOOR, ParticleSystem, TransformDomainError, weighted_moments

TRANSFORMS = ("identity", "log", "logit")


@dataclass(frozen=True)
class BlockSpec:
    """A group of coordinates updated jointly.

    ``transform`` is ``identity``, ``log`` (positive coordinates) or ``logit``
    (a simplex mapped to log ratios against its last component, so a block of
    ``r`` weights has ``r - 1`` free coordinates).
    """

    name: str
    indices: tuple
    transform: str = "identity"

    def __post_init__(self):
        if self.transform not in TRANSFORMS:
            raise ValueError(f"unknown transform {self.transform!r}")
        if self.transform == "logit" and len(self.indices) < 2:
            raise ValueError("logit blocks need a simplex of dimension >= 2")

    @property
    def free_dim(self) -> int:
        return len(self.indices) - (1 if self.transform == "logit" else 0)


def to_free(block: BlockSpec, v: np.ndarray) -> np.ndarray:
    """Map block coordinates ``v`` (shape ``(n, len(indices))``) to R^d."""
    if block.transform == "identity":
        return v.copy()
    with np.errstate(divide="ignore", invalid="ignore"):
        if block.transform == "log":
            if np.any(v <= 0):
                raise TransformDomainError("transform domain: log of a nonpositive value")
            return np.log(v)
        if np.any(v <= 0):
            raise TransformDomainError("transform domain: logit of a nonpositive weight")
        lv = np.log(v)
        return lv[:, :-1] - lv[:, -1:]


def from_free(block: BlockSpec, z: np.ndarray) -> np.ndarray:
    if block.transform == "identity":
        return z.copy()
    if block.transform == "log":
        return np.exp(z)
    full = np.concatenate([z, np.zeros((z.shape[0], 1))], axis=1)
    full -= full.max(axis=1, keepdims=True)
    e = np.exp(full)
    return e / e.sum(axis=1, keepdims=True)


def log_jacobian(block: BlockSpec, v: np.ndarray) -> np.ndarray:
    """``log |dv/dz|`` for the free parametrization, per row."""
    if block.transform == "identity":
        return np.zeros(v.shape[0])
    with np.errstate(divide="ignore"):
        return np.sum(np.log(v), axis=1)


@dataclass
class KernelStats:
    accepts: dict = field(default_factory=dict)
    attempts: dict = field(default_factory=dict)

    def add(self, name: str, acc: int, att: int):
        self.accepts[name] = self.accepts.get(name, 0) + int(acc)
        self.attempts[name] = self.attempts.get(name, 0) + int(att)

    def rate(self, name: str) -> float:
        att = self.attempts.get(name, 0)
        return self.accepts.get(name, 0) / att if att else float("nan")

    def merge(self, other: "KernelStats"):
        for k in other.attempts:
            self.add(k, other.accepts.get(k, 0), other.attempts[k])


@dataclass
class KernelConfig:
    """Proposal settings.

    ``scales`` maps ``(model_id, block_name)`` to a vector of proposal
    variances in free coordinates.  In adaptive mode these are recomputed from
    the particle population before every mutation.
    """

    scale_mode: str = "adaptive"
    default_scale: float = 0.1
    multiplier: float | None = None  # None means 2.38**2 / d
    n_sweeps: int = 1
    clamp: bool = False
    floor: float = VARIANCE_FLOOR
    scales: dict = field(default_factory=dict)
    last_rates: dict = field(default_factory=dict)
    factors: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.scale_mode not in ("manual", "adaptive"):
            raise ValueError("scale_mode must be 'manual' or 'adaptive'")
        if self.n_sweeps < 0:
            raise ValueError("n_sweeps must be >= 0")
        if self.default_scale <= 0:
            raise ValueError("scales must be positive")

    def scale(self, model_id: int, block: BlockSpec) -> np.ndarray:
        s = self.scales.get((int(model_id), block.name))
        if s is None:
            return np.full(block.free_dim, self.default_scale)
        return np.broadcast_to(np.asarray(s, dtype=float), (block.free_dim,))

    def mult(self, d: int) -> float:
        return self.multiplier if self.multiplier is not None else 2.38 ** 2 / d


def _like_term(power, loglik):
    if power == 0:
        return np.zeros_like(loglik)
    return power * loglik


def mh_block_sweep(sys: ParticleSystem, model, path, alpha: float,
                   cfg: KernelConfig, rng: np.random.Generator) -> KernelStats:
    """One sweep over every block of every particle, updating ``sys`` in place.

    Each block proposes a Gaussian step in free coordinates and accepts with
    the tempered target ratio times the Jacobian of the transform.  Proposals
    with zero prior density or non-finite values are rejected.
    """
    stats = KernelStats()
    power = path.like_power(alpha)
    for k in np.unique(sys.model):
        sel = np.flatnonzero(sys.model == k)
        d = model.dim(k)
        xs = sys.x[sel, :d]
        ll = sys.loglik[sel]
        lp = sys.logprior[sel]
        for block in model.blocks(k):
            if block.free_dim == 0:
                continue
            idx = list(block.indices)
            cur = xs[:, idx]
            z = to_free(block, cur)
            step = rng.standard_normal(z.shape) * np.sqrt(cfg.scale(k, block))
            prop_block = from_free(block, z + step)
            prop = xs.copy()
            prop[:, idx] = prop_block
            with np.errstate(all="ignore"):
                lp_new = model.log_prior(prop, k)
                ok = np.isfinite(lp_new) & np.all(np.isfinite(prop_block), axis=1)
                ll_new = np.full(len(sel), -np.inf)
                if ok.any():
                    ll_new[ok] = model.log_likelihood(prop[ok], k)
                log_ratio = (lp_new + _like_term(power, ll_new)
                             - lp - _like_term(power, ll)
                             + log_jacobian(block, prop_block) - log_jacobian(block, cur))
            log_ratio = np.where(ok & ~np.isnan(log_ratio), log_ratio, -np.inf)
            if power > 0:
                log_ratio = np.where(np.isneginf(ll_new), -np.inf, log_ratio)
            accept = np.log(rng.random(len(sel))) < log_ratio
            xs[accept] = prop[accept]
            ll = np.where(accept, ll_new, ll)
            lp = np.where(accept, lp_new, lp)
            stats.add(block.name, accept.sum(), len(sel))
        sys.x[sel, :d] = xs
        sys.loglik[sel] = ll
        sys.logprior[sel] = lp
    return stats


def block_moments(sys: ParticleSystem, model, k: int, block: BlockSpec,
                  floor: float = VARIANCE_FLOOR):
    """Weighted mean and variance of a block's free coordinates in model ``k``."""
    sel = sys.model == k
    if sel.sum() < 2:
        return None
    w = sys.weights[sel]
    if not w.sum() > 0:
        return None
    z = to_free(block, sys.x[sel][:, list(block.indices)])
    return weighted_moments(z, w, floor)


def adapt_scales(sys: ParticleSystem, model, cfg: KernelConfig) -> KernelConfig:
    """Proposal variances from the weighted particle approximation.

    Each block gets ``multiplier * weighted variance`` of its free
    coordinates (diagonal covariance).  Models with fewer than two particles
    keep their previous scales.  Consumes no random numbers.
    """
    if cfg.scale_mode != "adaptive":
        return cfg
    scales = dict(cfg.scales)
    factors = dict(cfg.factors)
    if cfg.clamp:
        # persistent factor per block: halve below 0.2 acceptance, double above 0.5
        for name, rate in cfg.last_rates.items():
            f = factors.get(name, 1.0)
            if rate < 0.2:
                f *= 0.5
            elif rate > 0.5:
                f *= 2.0
            factors[name] = f
    for k in np.unique(sys.model):
        for block in model.blocks(k):
            if block.free_dim == 0:
                continue
            mom = block_moments(sys, model, k, block, cfg.floor)
            if mom is None:
                continue
            scales[(int(k), block.name)] = (cfg.mult(block.free_dim) * mom[1]
                                            * factors.get(block.name, 1.0))
    return replace(cfg, scales=scales, factors=factors, last_rates={})
