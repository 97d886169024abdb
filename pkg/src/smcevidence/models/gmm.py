"""Gaussian mixture model with conjugate-style priors and reversible-jump moves.

A model with ``r`` components has parameters ``(mu_1:r, lambda_1:r,
omega_1:r)`` (means, precisions and weights) stored in that order, so the
state width is ``3r``.
"""

from __future__ import annotations

import numpy as np
from numba import njit
from scipy import special, stats

from ..kernels import BlockSpec
from .base import TargetModel

LOG_2PI = float(np.log(2 * np.pi))
TRUE_MEANS = (-3.0, 0.0, 3.0, 6.0)
TRUE_PRECISION = 2.0
TRUE_WEIGHT = 0.25


def gmm_generate_data(rng: np.random.Generator, n: int = 100) -> np.ndarray:
    """Draws from the four-component benchmark mixture."""
    comp = rng.integers(len(TRUE_MEANS), size=n)
    means = np.asarray(TRUE_MEANS)[comp]
    return means + rng.standard_normal(n) / np.sqrt(TRUE_PRECISION)


def prior_constants(y) -> dict:
    y = np.asarray(y, dtype=float)
    lo, hi = float(y.min()), float(y.max())
    kappa = (hi - lo) ** -2
    return {"xi": 0.5 * (hi + lo), "kappa": kappa, "nu": 2.0, "chi": 50.0 * kappa, "rho": 1.0}


def unpack(x: np.ndarray, r: int):
    return x[:, :r], x[:, r:2 * r], x[:, 2 * r:3 * r]


def pack(mu, lam, w) -> np.ndarray:
    return np.concatenate([mu, lam, w], axis=1)


@njit(cache=True)
def _mixture_loglik(y, mu, lam, w):
    n_part, r = mu.shape
    out = np.empty(n_part)
    c = np.empty(r)
    for p in range(n_part):
        for j in range(r):
            c[j] = np.log(w[p, j]) + 0.5 * (np.log(lam[p, j]) - LOG_2PI)
        total = 0.0
        for i in range(y.shape[0]):
            m = -np.inf
            for j in range(r):
                z = c[j] - 0.5 * lam[p, j] * (y[i] - mu[p, j]) ** 2
                if z > m:
                    m = z
            if m == -np.inf:
                total = -np.inf
                break
            acc = 0.0
            for j in range(r):
                acc += np.exp(c[j] - 0.5 * lam[p, j] * (y[i] - mu[p, j]) ** 2 - m)
            total += m + np.log(acc)
        out[p] = total
    return out


def gmm_log_likelihood(y, mu, lam, w) -> np.ndarray:
    """Mixture log-likelihood for parameter rows ``mu, lam, w`` of shape ``(N, r)``."""
    y = np.asarray(y, dtype=float)
    mu, lam, w = (np.ascontiguousarray(np.atleast_2d(a), dtype=float) for a in (mu, lam, w))
    bad = ~(np.all(lam > 0, axis=1) & np.all(w >= 0, axis=1)
            & (np.abs(w.sum(axis=1) - 1) < 1e-8) & np.all(np.isfinite(mu), axis=1))
    safe = ~bad[:, None]
    out = _mixture_loglik(y, np.where(safe, mu, 0.0), np.where(safe, lam, 1.0),
                          np.where(safe, w, 1.0 / mu.shape[1]))
    return np.where(bad | np.isnan(out), -np.inf, out)


class GaussianMixture(TargetModel):
    """Mixtures with ``r`` in ``r_values``.

    ``ordered`` restricts the means to be increasing (and multiplies the prior
    by ``r!`` so it stays normalized); it is required by the reversible-jump
    moves.
    """

    def __init__(self, y, r_values=range(1, 11), ordered: bool = False,
                 moves=("split", "birth")):
        if not set(moves) <= {"split", "birth"} or not moves:
            raise ValueError("moves must be a non-empty subset of ('split', 'birth')")
        self.p_split = 0.5 if len(set(moves)) == 2 else float("split" in moves)
        self.y = np.asarray(y, dtype=float)
        self.model_ids = tuple(int(r) for r in r_values)
        self.ordered = bool(ordered)
        c = prior_constants(self.y)
        self.xi, self.kappa, self.nu, self.chi, self.rho = (
            c["xi"], c["kappa"], c["nu"], c["chi"], c["rho"])
        self.r_max = max(self.model_ids)

    def dim(self, k):
        return 3 * int(k)

    @property
    def max_dim(self):
        return 3 * self.r_max

    def blocks(self, k):
        r = int(k)
        out = [BlockSpec("mu", tuple(range(r)), "identity"),
               BlockSpec("lambda", tuple(range(r, 2 * r)), "log")]
        if r >= 2:
            out.append(BlockSpec("omega", tuple(range(2 * r, 3 * r)), "logit"))
        return out

    # component-level prior pieces, shared with the jump proposals
    def log_prior_mu(self, mu):
        return 0.5 * (np.log(self.kappa) - LOG_2PI) - 0.5 * self.kappa * (mu - self.xi) ** 2

    def log_prior_lam(self, lam):
        return stats.gamma.logpdf(lam, a=self.nu, scale=self.chi)

    def sample_prior(self, rng, n, k):
        r = int(k)
        mu = self.xi + rng.standard_normal((n, r)) / np.sqrt(self.kappa)
        lam = rng.gamma(self.nu, self.chi, size=(n, r))
        w = rng.dirichlet(np.full(r, self.rho), size=n)
        if self.ordered:
            order = np.argsort(mu, axis=1)
            mu = np.take_along_axis(mu, order, 1)
            lam = np.take_along_axis(lam, order, 1)
            w = np.take_along_axis(w, order, 1)
        return pack(mu, lam, w)

    def log_prior(self, x, k):
        r = int(k)
        mu, lam, w = unpack(np.asarray(x, dtype=float), r)
        with np.errstate(divide="ignore", invalid="ignore"):
            lp = (self.log_prior_mu(mu).sum(axis=1)
                  + np.where(lam > 0, self.log_prior_lam(np.where(lam > 0, lam, 1.0)),
                             -np.inf).sum(axis=1)
                  + special.gammaln(r * self.rho) - r * special.gammaln(self.rho)
                  + (self.rho - 1) * np.log(w).sum(axis=1))
        ok = (np.all(w > 0, axis=1) & (np.abs(w.sum(axis=1) - 1) < 1e-8)
              & np.all(np.isfinite(mu), axis=1))
        if self.ordered:
            ok &= np.all(np.diff(mu, axis=1) > 0, axis=1)
            lp = lp + special.gammaln(r + 1)
        return np.where(ok & ~np.isnan(lp), lp, -np.inf)

    def log_likelihood(self, x, k):
        mu, lam, w = unpack(np.asarray(x, dtype=float), int(k))
        return gmm_log_likelihood(self.y, mu, lam, w)

    def sort_components(self, x, k):
        """Reorder components so that the means increase."""
        r = int(k)
        mu, lam, w = unpack(np.asarray(x, dtype=float), r)
        order = np.argsort(mu, axis=1)
        return pack(*(np.take_along_axis(a, order, 1) for a in (mu, lam, w)))

    # ------------------------------------------------------------------
    # reversible jumps
    def rj_move(self, sys, path, alpha, rng, allowed=None):
        """One split/combine or birth/death attempt per particle, in place.

        Returns a dict of ``(accepted, attempted)`` counts per move type.
        """
        if not self.ordered:
            raise ValueError("reversible-jump moves need the ordered parametrization")
        allowed = set(self.model_ids if allowed is None else allowed)
        n = sys.size
        family = rng.random(n) < self.p_split  # True: split/combine, False: birth/death
        up = rng.random(n) < 0.5
        counts = {"split": [0, 0], "combine": [0, 0], "birth": [0, 0], "death": [0, 0]}
        power = path.like_power(alpha)
        labels = sys.model.copy()  # each particle moves at most once
        for r in np.unique(labels):
            r = int(r)
            for fam in (True, False):
                for u in (True, False):
                    sel = np.flatnonzero((labels == r) & (family == fam) & (up == u))
                    if sel.size == 0:
                        continue
                    kind = ("split" if u else "combine") if fam else ("birth" if u else "death")
                    counts[kind][1] += sel.size
                    r_new = r + 1 if u else r - 1
                    if r_new not in allowed or (kind == "combine" and r < 2):
                        continue
                    x_old = sys.x[sel, :3 * r]
                    x_new, log_q = getattr(self, "_" + kind)(x_old, r, rng)
                    lp_new = self.log_prior(x_new, r_new)
                    ok = np.isfinite(lp_new) & np.isfinite(log_q)
                    ll_new = np.full(sel.size, -np.inf)
                    if ok.any():
                        ll_new[ok] = self.log_likelihood(x_new[ok], r_new)
                    lm_new = path.log_model_mass(np.full(sel.size, r_new), alpha)
                    lm_old = path.log_model_mass(np.full(sel.size, r), alpha)
                    with np.errstate(invalid="ignore"):
                        like_new = power * ll_new if power else 0.0
                        like_old = power * sys.loglik[sel] if power else 0.0
                        log_a = (lm_new + lp_new + like_new
                                 - lm_old - sys.logprior[sel] - like_old + log_q)
                    log_a = np.where(ok & ~np.isnan(log_a), log_a, -np.inf)
                    acc = np.log(rng.random(sel.size)) < log_a
                    if not acc.any():
                        continue
                    rows = sel[acc]
                    sys.x[rows] = 0.0
                    sys.x[rows, :3 * r_new] = x_new[acc]
                    sys.model[rows] = r_new
                    sys.logprior[rows] = lp_new[acc]
                    sys.loglik[rows] = ll_new[acc]
                    counts[kind][0] += int(acc.sum())
        return counts

    def split_map(self, mu, lam, w, u1, u2, u3):
        """Moment-matching split of single components (all 1-d arrays)."""
        s2 = 1.0 / lam
        w1, w2 = w * u1, w * (1 - u1)
        s = np.sqrt(s2)
        mu1 = mu - u2 * s * np.sqrt(w2 / w1)
        mu2 = mu + u2 * s * np.sqrt(w1 / w2)
        s21 = u3 * (1 - u2 ** 2) * s2 * w / w1
        s22 = (1 - u3) * (1 - u2 ** 2) * s2 * w / w2
        return (mu1, mu2), (1.0 / s21, 1.0 / s22), (w1, w2)

    def combine_map(self, mu1, mu2, lam1, lam2, w1, w2):
        """Inverse of :meth:`split_map`: merged component and the implied ``u``."""
        w = w1 + w2
        mu = (w1 * mu1 + w2 * mu2) / w
        s21, s22 = 1.0 / lam1, 1.0 / lam2
        s2 = (w1 * (mu1 ** 2 + s21) + w2 * (mu2 ** 2 + s22)) / w - mu ** 2
        u1 = w1 / w
        u2 = (mu2 - mu1) * np.sqrt(w1 * w2) / (w * np.sqrt(s2))
        u3 = s21 * w1 / ((1 - u2 ** 2) * s2 * w)
        return (mu, 1.0 / s2, w), (u1, u2, u3)

    def split_log_jacobian(self, lam, lam1, lam2, w, mu1, mu2, u2, u3):
        # moment-matching Jacobian in variances, converted to precisions
        s2, s21, s22 = 1.0 / lam, 1.0 / lam1, 1.0 / lam2
        log_j = (np.log(w) + np.log(np.abs(mu2 - mu1)) + np.log(s21) + np.log(s22)
                 - np.log(u2) - np.log1p(-u2 ** 2) - np.log(u3) - np.log1p(-u3) - np.log(s2))
        return log_j + 2 * np.log(s2) - 2 * np.log(s21) - 2 * np.log(s22)

    @staticmethod
    def _log_g(u1, u2, u3):
        return (stats.beta.logpdf(u1, 2, 2) + stats.beta.logpdf(u2, 2, 2)
                + stats.beta.logpdf(u3, 1, 1))

    def _split(self, x, r, rng, j=None, u=None):
        n = x.shape[0]
        mu, lam, w = unpack(x, r)
        if j is None:
            j = rng.integers(r, size=n)
        if u is None:
            u = (rng.beta(2, 2, n), rng.beta(2, 2, n), rng.beta(1, 1, n))
        u1, u2, u3 = u
        rows = np.arange(n)
        (m1, m2), (l1, l2), (w1, w2) = self.split_map(mu[rows, j], lam[rows, j], w[rows, j],
                                                      u1, u2, u3)
        new = [_replace_one_with_two(a, j, b, c)
               for a, b, c in ((mu, m1, m2), (lam, l1, l2), (w, w1, w2))]
        with np.errstate(divide="ignore", invalid="ignore"):
            log_q = (self.split_log_jacobian(lam[rows, j], l1, l2, w[rows, j], m1, m2, u2, u3)
                     - self._log_g(u1, u2, u3))
        return pack(*new), log_q

    def _combine(self, x, r, rng, j=None):
        n = x.shape[0]
        mu, lam, w = unpack(x, r)
        if j is None:
            j = rng.integers(r - 1, size=n)
        rows = np.arange(n)
        (m, l, ww), (u1, u2, u3) = self.combine_map(mu[rows, j], mu[rows, j + 1],
                                                    lam[rows, j], lam[rows, j + 1],
                                                    w[rows, j], w[rows, j + 1])
        new = [_replace_two_with_one(a, j, b) for a, b in ((mu, m), (lam, l), (w, ww))]
        with np.errstate(divide="ignore", invalid="ignore"):
            log_q = -(self.split_log_jacobian(l, lam[rows, j], lam[rows, j + 1], ww,
                                              mu[rows, j], mu[rows, j + 1], u2, u3)
                      - self._log_g(u1, u2, u3))
        return pack(*new), log_q

    def _birth(self, x, r, rng):
        n = x.shape[0]
        mu, lam, w = unpack(x, r)
        ws = rng.beta(1, r, n)
        ms = self.xi + rng.standard_normal(n) / np.sqrt(self.kappa)
        ls = rng.gamma(self.nu, self.chi, n)
        pos = np.sum(mu < ms[:, None], axis=1)
        new_mu = _insert(mu, pos, ms)
        new_lam = _insert(lam, pos, ls)
        new_w = _insert(w * (1 - ws)[:, None], pos, ws)
        log_q = (np.log(1.0 / (r + 1))
                 - stats.beta.logpdf(ws, 1, r) - self.log_prior_mu(ms) - self.log_prior_lam(ls)
                 + (r - 1) * np.log1p(-ws))
        return pack(new_mu, new_lam, new_w), log_q

    def _death(self, x, r, rng):
        n = x.shape[0]
        mu, lam, w = unpack(x, r)
        j = rng.integers(r, size=n)
        rows = np.arange(n)
        ws, ms, ls = w[rows, j], mu[rows, j], lam[rows, j]
        keep = np.ones((n, r), dtype=bool)
        keep[rows, j] = False
        rem = lambda a: a[keep].reshape(n, r - 1)  # noqa: E731
        new_w = rem(w) / (1 - ws)[:, None]
        with np.errstate(divide="ignore", invalid="ignore"):
            log_q = -(np.log(1.0 / r)
                      - stats.beta.logpdf(ws, 1, r - 1) - self.log_prior_mu(ms)
                      - self.log_prior_lam(ls) + (r - 2) * np.log1p(-ws))
        return pack(rem(mu), rem(lam), new_w), log_q


def _replace_one_with_two(a, j, b, c):
    n, r = a.shape
    cols = np.arange(r + 1)[None, :]
    src = np.where(cols <= j[:, None], cols, cols - 1)
    out = np.take_along_axis(a, np.minimum(src, r - 1), 1)
    rows = np.arange(n)
    out[rows, j] = b
    out[rows, j + 1] = c
    return out


def _replace_two_with_one(a, j, b):
    n, r = a.shape
    cols = np.arange(r - 1)[None, :]
    src = np.where(cols <= j[:, None], cols, cols + 1)
    out = np.take_along_axis(a, src, 1)
    out[np.arange(n), j] = b
    return out


def _insert(a, pos, v):
    n, r = a.shape
    cols = np.arange(r + 1)[None, :]
    src = np.where(cols < pos[:, None], cols, cols - 1)
    out = np.take_along_axis(a, np.clip(src, 0, max(r - 1, 0)), 1) if r else np.zeros((n, 1))
    out[np.arange(n), pos] = v
    return out
