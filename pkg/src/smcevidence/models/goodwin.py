"""Goodwin oscillator ODE model with Gaussian observation noise.

Parameters are ``(alpha, a1, a2, k_1, ..., k_{m-1})``, all positive with
independent Gamma priors.  Observations are ``(X1, X2)`` on the last points of
a regular time grid.
"""

from __future__ import annotations

import numpy as np
from numba import njit
from scipy import special

from ..kernels import BlockSpec
from .base import TargetModel

OVERFLOW = 1e12


@njit(cache=True)
def _rhs(x, out, alpha, a1, a2, k, rho, m):
    xm = x[m - 1]
    out[0] = a1 / (1.0 + a2 * np.abs(xm) ** rho) - alpha * x[0]
    for i in range(1, m):
        out[i] = k[i - 1] * x[i - 1] - alpha * x[i]


@njit(cache=True)
def _solve_one(theta, m, rho, dt, n_steps, every, n_obs, out):
    alpha = theta[0]
    a1 = theta[1]
    a2 = theta[2]
    k = theta[3:]
    x = np.zeros(m)
    k1 = np.empty(m)
    k2 = np.empty(m)
    k3 = np.empty(m)
    k4 = np.empty(m)
    tmp = np.empty(m)
    out[0, 0] = 0.0
    out[0, 1] = 0.0
    j = 1
    for s in range(1, n_steps + 1):
        _rhs(x, k1, alpha, a1, a2, k, rho, m)
        for i in range(m):
            tmp[i] = x[i] + 0.5 * dt * k1[i]
        _rhs(tmp, k2, alpha, a1, a2, k, rho, m)
        for i in range(m):
            tmp[i] = x[i] + 0.5 * dt * k2[i]
        _rhs(tmp, k3, alpha, a1, a2, k, rho, m)
        for i in range(m):
            tmp[i] = x[i] + dt * k3[i]
        _rhs(tmp, k4, alpha, a1, a2, k, rho, m)
        for i in range(m):
            x[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
            if not np.abs(x[i]) <= OVERFLOW:
                return False
        if s % every == 0 and j < n_obs:
            out[j, 0] = x[0]
            out[j, 1] = x[1] if m > 1 else 0.0
            j += 1
    return True


@njit(cache=True)
def _solve_many(thetas, m, rho, dt, n_steps, every, n_obs):
    n = thetas.shape[0]
    out = np.zeros((n, n_obs, 2))
    ok = np.zeros(n, dtype=np.bool_)
    for p in range(n):
        ok[p] = _solve_one(thetas[p], m, rho, dt, n_steps, every, n_obs, out[p])
    return out, ok


def goodwin_solve(params, m: int, rho: float = 10.0, dt: float = 0.05,
                  t_end: float = 60.0, obs_step: float = 0.5):
    """Fixed-step RK4 trajectories of ``(X1, X2)`` on the observation grid.

    ``params`` has shape ``(m + 2,)`` or ``(n, m + 2)``.  Returns the array of
    shape ``(n, n_grid, 2)`` and a flag per row that is False where a state
    component left ``[-1e12, 1e12]``.
    """
    p = np.atleast_2d(np.asarray(params, dtype=float))
    if p.shape[1] != m + 2:
        raise ValueError(f"expected {m + 2} parameters, got {p.shape[1]}")
    every = int(round(obs_step / dt))
    n_steps = int(round(t_end / dt))
    n_obs = n_steps // every + 1
    return _solve_many(np.ascontiguousarray(p), int(m), float(rho), float(dt),
                       n_steps, every, n_obs)


class Goodwin(TargetModel):
    """Goodwin model with ``m`` components observed through ``(X1, X2)``."""

    model_ids = (0,)

    def __init__(self, y, m: int = 3, rho: float = 10.0, sigma: float = 0.2,
                 prior_shape: float = 0.1, prior_rate: float = 0.1, n_obs: int = 80,
                 dt: float = 0.05, t_end: float = 60.0, obs_step: float = 0.5):
        if m < 2:
            raise ValueError("need m >= 2 components")
        self.y = np.asarray(y, dtype=float)
        if self.y.shape != (n_obs, 2):
            raise ValueError(f"data must have shape ({n_obs}, 2)")
        self.m, self.rho, self.sigma = int(m), float(rho), float(sigma)
        self.shape, self.rate = float(prior_shape), float(prior_rate)
        self.n_obs = int(n_obs)
        self.dt, self.t_end, self.obs_step = dt, t_end, obs_step

    def dim(self, k=0):
        return self.m + 2

    def blocks(self, k=0):
        return [BlockSpec("theta", tuple(range(self.m + 2)), "log")]

    def sample_prior(self, rng, n, k=0):
        return rng.gamma(self.shape, 1.0 / self.rate, size=(n, self.m + 2))

    def log_prior(self, x, k=0):
        x = np.asarray(x, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            lp = (self.shape * np.log(self.rate) - special.gammaln(self.shape)
                  + (self.shape - 1) * np.log(x) - self.rate * x)
        lp = np.where(x > 0, lp, -np.inf).sum(axis=1)
        return np.where(np.isnan(lp), -np.inf, lp)

    def trajectories(self, x):
        return goodwin_solve(x, self.m, self.rho, self.dt, self.t_end, self.obs_step)

    def log_likelihood(self, x, k=0):
        x = np.asarray(x, dtype=float)
        traj, ok = self.trajectories(x)
        pred = traj[:, -self.n_obs:, :]
        resid = (self.y[None] - pred) / self.sigma
        n = self.y.size
        ll = (-0.5 * np.sum(resid ** 2, axis=(1, 2))
              - n * (np.log(self.sigma) + 0.5 * np.log(2 * np.pi)))
        return np.where(ok & np.isfinite(ll), ll, -np.inf)


def goodwin_generate_data(rng, m: int = 3, rho: float = 10.0, sigma: float = 0.2,
                          n_obs: int = 80, min_range: float = 0.5, max_level: float = 10.0,
                          min_turns: int = 2, batch: int = 10000, max_batches: int = 100):
    """Draw parameters from the prior until the observed window oscillates.

    A draw is kept when both observed species vary by at least ``min_range``,
    stay below ``max_level`` and ``X1`` has ``min_turns`` turning points.
    Returns ``(params, y)`` with Gaussian noise of s.d. ``sigma`` added.
    """
    model = Goodwin(np.zeros((n_obs, 2)), m=m, rho=rho, sigma=sigma, n_obs=n_obs)
    for _ in range(max_batches):
        theta = model.sample_prior(rng, batch)
        traj, ok = model.trajectories(theta)
        obs = traj[:, -n_obs:, :]
        turns = (np.diff(np.sign(np.diff(obs[:, :, 0], axis=1)), axis=1) != 0).sum(axis=1)
        good = (ok & np.all(np.ptp(obs, axis=1) >= min_range, axis=1)
                & (np.abs(obs).max(axis=(1, 2)) <= max_level) & (turns >= min_turns))
        if good.any():
            i = int(np.flatnonzero(good)[0])
            y = obs[i] + sigma * rng.standard_normal(obs[i].shape)
            return theta[i], y
    raise RuntimeError("no prior draw produced oscillating dynamics")
