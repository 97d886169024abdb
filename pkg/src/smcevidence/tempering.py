"""Tempered density paths, fixed schedules and the adaptive step controller."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .particles import log_cess, log_ess

MIXTURE_EPS = 1e-12


class ForcedMicroStepWarning(RuntimeWarning):
    """Emitted when the bisection cannot bracket the CESS target."""


class GeometricPath:
    """Likelihood-tempered path ``log q_a = log prior + a * log likelihood``.

    Optional per-model prior masses make this the joint path over several
    models (the all-in-one sampler); with a single model they are constant.
    """

    kind = "geometric"

    def __init__(self, log_model_prior: dict[int, float] | None = None):
        self.log_model_prior = dict(log_model_prior or {})

    def like_power(self, alpha: float) -> float:
        return alpha

    def log_model_mass(self, model: np.ndarray, alpha: float) -> np.ndarray:
        model = np.asarray(model)
        if not self.log_model_prior:
            return np.zeros(model.shape)
        out = np.full(model.shape, -np.inf)
        for k, lp in self.log_model_prior.items():
            out[model == k] = lp
        return out

    def value(self, loglik: np.ndarray, model: np.ndarray) -> np.ndarray:
        """Per-particle quantity retained for re-expectation at other alphas."""
        return np.asarray(loglik, dtype=float)

    def log_inc_from_value(self, value, a_prev: float, a_next: float) -> np.ndarray:
        value = np.asarray(value, dtype=float)
        d = a_next - a_prev
        if d == 0:
            return np.zeros_like(value)
        out = d * value
        # -inf likelihood particles die; keep them at -inf rather than nan
        return np.where(np.isneginf(value), -np.inf, out)

    def derivative_from_value(self, value, alpha: float) -> np.ndarray:
        return np.asarray(value, dtype=float)

    def log_inc_weight(self, loglik, model, a_prev, a_next):
        return self.log_inc_from_value(self.value(loglik, model), a_prev, a_next)

    def derivative(self, loglik, model, alpha):
        return self.derivative_from_value(self.value(loglik, model), alpha)


class ModelMixturePath:
    """Path between two models through their prior model probabilities.

    ``pi_a(upper) = a`` and ``pi_a(lower) = 1 - a``; the likelihood enters
    untempered.  Log ratios clamp ``a`` to ``[eps, 1 - eps]``.
    """

    kind = "mixture"

    def __init__(self, lower: int, upper: int, eps: float = MIXTURE_EPS):
        self.lower = int(lower)
        self.upper = int(upper)
        self.eps = eps

    def _clamp(self, a):
        return min(max(a, self.eps), 1.0 - self.eps)

    def like_power(self, alpha: float) -> float:
        return 1.0

    def log_model_mass(self, model, alpha):
        model = np.asarray(model)
        out = np.full(model.shape, -np.inf)
        if alpha > 0:
            out[model == self.upper] = np.log(alpha)
        if alpha < 1:
            out[model == self.lower] = np.log1p(-alpha)
        return out

    def value(self, loglik, model):
        return (np.asarray(model) == self.upper).astype(float)

    def log_inc_from_value(self, value, a_prev, a_next):
        v = np.asarray(value, dtype=float)
        a0, a1 = self._clamp(a_prev), self._clamp(a_next)
        up = np.log(a1) - np.log(a0)
        lo = np.log1p(-a1) - np.log1p(-a0)
        return np.where(v > 0.5, up, lo)

    def derivative_from_value(self, value, alpha):
        v = np.asarray(value, dtype=float)
        a = self._clamp(alpha)
        return np.where(v > 0.5, 1.0 / a, -1.0 / (1.0 - a))

    def log_inc_weight(self, loglik, model, a_prev, a_next):
        return self.log_inc_from_value(self.value(loglik, model), a_prev, a_next)

    def derivative(self, loglik, model, alpha):
        return self.derivative_from_value(self.value(loglik, model), alpha)


def log_inc_weight(path, a_prev: float, a_next: float, loglik, model=None) -> np.ndarray:
    """Log incremental weight ``log q_{a_next}(x) / q_{a_prev}(x)`` at fixed states."""
    if not 0.0 <= a_prev < a_next <= 1.0:
        raise ValueError(f"need 0 <= a_prev < a_next <= 1, got {a_prev}, {a_next}")
    loglik = np.atleast_1d(np.asarray(loglik, dtype=float))
    if model is None:
        model = np.zeros(loglik.shape, dtype=int)
    return path.log_inc_weight(loglik, np.atleast_1d(model), a_prev, a_next)


@dataclass
class BisectionConfig:
    cess_target: float = 0.99
    tolerance: float = 1e-8
    max_iters: int = 100
    criterion: str = "cess"  # or "ess" for relative ESS decay

    def __post_init__(self):
        if not 0.0 < self.cess_target < 1.0:
            raise ValueError("cess_target must lie in (0, 1)")
        if self.tolerance <= 0 or self.max_iters < 1:
            raise ValueError("tolerance must be positive and max_iters >= 1")
        if self.criterion not in ("cess", "ess"):
            raise ValueError("criterion must be 'cess' or 'ess'")


def _criterion(log_W, value, path, a_prev, cfg: BisectionConfig):
    n = log_W.size
    if cfg.criterion == "cess":
        goal = cfg.cess_target * n

        def score(a):
            return log_cess(log_W, path.log_inc_from_value(value, a_prev, a))
    else:
        # relative decay of the ESS of the running weights
        goal = cfg.cess_target * log_ess(log_W, np.zeros(n))

        def score(a):
            return log_ess(log_W, path.log_inc_from_value(value, a_prev, a))
    return score, goal


def find_next_alpha(log_W, value, path, a_prev: float,
                    cfg: BisectionConfig | None = None) -> tuple[float, bool]:
    """Next temperature by bisection on the CESS (or relative ESS) criterion.

    ``value`` is the per-particle path quantity (the log-likelihood for the
    geometric path).  Returns ``(alpha, forced)`` where ``forced`` flags the
    micro-step fallback taken when even the smallest step misses the target.
    """
    cfg = cfg or BisectionConfig()
    if not a_prev < 1.0:
        raise ValueError("already at alpha = 1")
    log_W = np.asarray(log_W, dtype=float)
    score, goal = _criterion(log_W, value, path, a_prev, cfg)
    if score(1.0) >= goal:
        return 1.0, False
    lo, hi = a_prev, 1.0
    small = min(a_prev + cfg.tolerance, 1.0)
    if score(small) < goal:
        warnings.warn(
            f"forced micro-step at alpha={a_prev:.6g}: target not attainable",
            ForcedMicroStepWarning, stacklevel=2)
        return small, True
    for _ in range(cfg.max_iters):
        mid = 0.5 * (lo + hi)
        if score(mid) >= goal:
            lo = mid
        else:
            hi = mid
        if hi - lo < cfg.tolerance:
            break
    return (lo if lo > a_prev else small), False


def schedule_value(kind: str, u: float, p: float = 2.0) -> float:
    if kind == "linear":
        return u
    if kind in ("power", "prior"):
        return u ** p
    if kind == "posterior":
        return 1.0 - (1.0 - u) ** p
    raise ValueError(f"unknown schedule kind {kind!r}")


@dataclass
class Schedule:
    """Temperature schedule: a fixed family on ``T`` steps or adaptive placement."""

    kind: str = "adaptive"
    T: int = 100
    p: float = 2.0
    bisection: BisectionConfig = field(default_factory=BisectionConfig)
    realized_alphas: list = field(default_factory=lambda: [0.0])

    def __post_init__(self):
        if self.kind not in ("linear", "power", "prior", "posterior", "adaptive"):
            raise ValueError(f"unknown schedule kind {self.kind!r}")
        if self.kind != "adaptive" and self.T < 1:
            raise ValueError("fixed schedules need T >= 1")

    @property
    def adaptive(self) -> bool:
        return self.kind == "adaptive"

    def fixed_alphas(self) -> np.ndarray:
        return np.array([next_alpha_fixed(self, t, self.T) for t in range(self.T + 1)])


def next_alpha_fixed(schedule: Schedule, t: int, T: int) -> float:
    """Value of a fixed schedule at step ``t`` of ``T`` with exact endpoints."""
    if not 0 <= t <= T:
        raise ValueError("need 0 <= t <= T")
    if t == 0:
        return 0.0
    if t == T:
        return 1.0
    return schedule_value(schedule.kind, t / T, schedule.p)
