"""Compartmental model for PET time-activity curves.

``C_T(t) = sum_i phi_i * int_0^t C_P(s) exp(-theta_i (t - s)) ds`` with a
piecewise-linear plasma input ``C_P``, observed with i.i.d. Gaussian noise of
unknown variance.  Parameters are stored as ``(phi_1:m, theta_1:m, sigma2)``.
"""

from __future__ import annotations

import numpy as np
from scipy import special

from ..kernels import BlockSpec
from .base import TargetModel

LOG_2PI = float(np.log(2 * np.pi))


def default_input_function(n_knots: int = 32, peak_time: float = 1.0,
                           span: float = 90.0) -> tuple[np.ndarray, np.ndarray]:
    """Synthetic plasma input: linear rise to a peak, then bi-exponential decay."""
    rise = np.linspace(0.0, peak_time, 5)
    tail = np.geomspace(peak_time, span, n_knots - 4)[1:]
    t = np.concatenate([rise, tail])
    c = np.where(t <= peak_time, 50.0 * t / peak_time,
                 40.0 * np.exp(-1.5 * (t - peak_time)) + 10.0 * np.exp(-0.02 * (t - peak_time)))
    return t, c


def default_times() -> np.ndarray:
    """Frame end times (minutes) of a 21-frame protocol."""
    frames = [0.5] * 4 + [1.0] * 4 + [2.0] * 4 + [5.0] * 4 + [10.0] * 5
    return np.cumsum(frames)


def _f1(x):
    # (1 - exp(-x)) / x
    small = np.abs(x) < 1e-8
    xs = np.where(small, 1.0, x)
    return np.where(small, 1.0 - 0.5 * x, -np.expm1(-xs) / xs)


def _f3(x):
    # (1 - exp(-x) (1 + x)) / x^2
    small = np.abs(x) < 1e-2
    xs = np.where(small, 1.0, x)
    series = 0.5 - x / 3.0 + x ** 2 / 8.0 - x ** 3 / 30.0
    return np.where(small, series, (-np.expm1(-xs) - xs * np.exp(-xs)) / xs ** 2)


def pet_ct(knots_t, knots_c, phi, theta, times) -> np.ndarray:
    """Tissue curve by exact convolution of the piecewise-linear input.

    ``phi`` and ``theta`` have shape ``(m,)`` or ``(N, m)``; the result has shape
    ``(N, len(times))`` (or ``(len(times),)`` for 1-d inputs).  The input
    function is held constant after its last knot.
    """
    bt = np.asarray(knots_t, dtype=float)
    bc = np.asarray(knots_c, dtype=float)
    one = np.ndim(phi) == 1
    phi = np.atleast_2d(np.asarray(phi, dtype=float))
    theta = np.atleast_2d(np.asarray(theta, dtype=float))
    t = np.asarray(times, dtype=float)
    starts = bt
    ends = np.append(bt[1:], np.inf)
    slopes = np.append(np.diff(bc) / np.diff(bt), 0.0)
    th = theta[:, :, None]
    conv = np.zeros(theta.shape + (t.size,))
    for b, e_k, c, g in zip(starts, ends, bc, slopes):
        active = t > b
        if not active.any():
            break
        e = np.minimum(e_k, t)
        h = np.where(active, e - b, 0.0)
        x = th * h
        part = np.exp(-th * (t - e)) * h * ((c + g * h) * _f1(x) - g * h * _f3(x))
        conv += np.where(active, part, 0.0)
    out = np.sum(phi[:, :, None] * conv, axis=1)
    return out[0] if one else out


def pet_vd(phi, theta):
    """Volume of distribution ``sum_j phi_j / theta_j``."""
    return np.sum(np.asarray(phi, dtype=float) / np.asarray(theta, dtype=float), axis=-1)


class PetCompartmental(TargetModel):
    """``m``-compartment model with uniform priors on rates and an inverse-gamma
    prior on the noise variance.

    ``theta`` is constrained to be increasing to remove the label symmetry;
    the prior carries the matching ``m!`` factor.
    """

    model_ids = (0,)

    def __init__(self, y, times=None, knots=None, m: int = 2,
                 phi_bounds=(1e-5, 1.0), theta_bounds=(1e-4, 1.0),
                 sigma2_shape: float = 1.0, sigma2_scale: float = 1.0):
        self.y = np.asarray(y, dtype=float)
        self.times = default_times() if times is None else np.asarray(times, dtype=float)
        if self.y.shape != self.times.shape:
            raise ValueError("data and sampling times differ in length")
        self.knots_t, self.knots_c = default_input_function() if knots is None else knots
        self.m = int(m)
        self.phi_bounds = tuple(map(float, phi_bounds))
        self.theta_bounds = tuple(map(float, theta_bounds))
        self.a, self.b = float(sigma2_shape), float(sigma2_scale)

    def dim(self, k=0):
        return 2 * self.m + 1

    def blocks(self, k=0):
        m = self.m
        return [BlockSpec("phi", tuple(range(m)), "log"),
                BlockSpec("theta", tuple(range(m, 2 * m)), "log"),
                BlockSpec("sigma2", (2 * m,), "log")]

    def split(self, x):
        m = self.m
        return x[:, :m], x[:, m:2 * m], x[:, 2 * m]

    def sample_prior(self, rng, n, k=0):
        m = self.m
        phi = rng.uniform(*self.phi_bounds, size=(n, m))
        theta = np.sort(rng.uniform(*self.theta_bounds, size=(n, m)), axis=1)
        sigma2 = self.b / rng.gamma(self.a, 1.0, size=n)
        return np.column_stack([phi, theta, sigma2])

    def log_prior(self, x, k=0):
        phi, theta, s2 = self.split(np.asarray(x, dtype=float))
        (p0, p1), (t0, t1) = self.phi_bounds, self.theta_bounds
        ok = (np.all((phi > p0) & (phi < p1), axis=1)
              & np.all((theta > t0) & (theta < t1), axis=1)
              & np.all(np.diff(theta, axis=1) > 0, axis=1) & (s2 > 0))
        with np.errstate(divide="ignore", invalid="ignore"):
            lp = (-self.m * np.log(p1 - p0) - self.m * np.log(t1 - t0)
                  + special.gammaln(self.m + 1)
                  + self.a * np.log(self.b) - special.gammaln(self.a)
                  - (self.a + 1) * np.log(s2) - self.b / s2)
        return np.where(ok, lp, -np.inf)

    def predict(self, x):
        phi, theta, _ = self.split(np.asarray(x, dtype=float))
        return pet_ct(self.knots_t, self.knots_c, phi, theta, self.times)

    def log_likelihood(self, x, k=0):
        x = np.asarray(x, dtype=float)
        _, _, s2 = self.split(x)
        with np.errstate(all="ignore"):
            r = self.y[None, :] - self.predict(x)
            n = self.y.size
            ll = -0.5 * n * (LOG_2PI + np.log(s2)) - 0.5 * np.sum(r ** 2, axis=1) / s2
        return np.where(np.isfinite(ll), ll, -np.inf)


def pet_generate_data(rng, phi=(0.08, 0.02), theta=(0.01, 0.25), sigma: float = 0.5,
                      times=None):
    """Simulated time-activity curve from a two-compartment truth."""
    times = default_times() if times is None else np.asarray(times, dtype=float)
    t, c = default_input_function()
    mean = pet_ct(t, c, np.asarray(phi), np.asarray(theta), times)
    return times, mean + sigma * rng.standard_normal(times.size)
