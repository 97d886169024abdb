"""Finite-state Feynman-Kac flows: exact marginals, the asymptotic variance of
weighted sums of particle averages, and Monte Carlo checks of both.

A flow has ``S`` states, an initial law ``eta_hat[0]``, Markov matrices
``M[t]`` and potentials ``G[t]`` for ``t = 1..T`` and test functions
``xi[t]`` with coefficients ``beta[t]`` for ``t = 0..T``.  Its particle
approximation draws ``N`` i.i.d. states from ``eta_hat[0]``; each later step
resamples multinomially from the previous weighted population, moves every
particle through ``M[t]`` and weights it by ``G[t]``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np


@dataclass
class FiniteStateFlow:
    eta0: np.ndarray
    M: list  # M[t - 1] is the transition into iteration t
    G: list  # G[t - 1] is the potential at iteration t
    xi: list  # xi[t] for t = 0..T
    beta: np.ndarray

    def __post_init__(self):
        self.eta0 = np.asarray(self.eta0, dtype=float)
        self.M = [np.asarray(m, dtype=float) for m in self.M]
        self.G = [np.asarray(g, dtype=float) for g in self.G]
        self.xi = [np.asarray(x, dtype=float) for x in self.xi]
        self.beta = np.asarray(self.beta, dtype=float)
        S = self.eta0.size
        if not 1 <= S <= 8:
            raise ValueError("state count must be between 1 and 8")
        if abs(self.eta0.sum() - 1) > 1e-12 or np.any(self.eta0 < 0):
            raise ValueError("eta0 must be a probability vector")
        if len(self.M) != len(self.G) or len(self.xi) != len(self.M) + 1:
            raise ValueError("need T matrices, T potentials and T + 1 test functions")
        if self.beta.size != len(self.xi):
            raise ValueError("need T + 1 coefficients")
        for m in self.M:
            if m.shape != (S, S) or np.any(m < 0) or np.any(np.abs(m.sum(axis=1) - 1) > 1e-12):
                raise ValueError("transition matrices must be row-stochastic S x S")
        for g in self.G:
            if g.shape != (S,) or np.any(g <= 0):
                raise ValueError("potentials must be positive")
        for x in self.xi:
            if x.shape != (S,):
                raise ValueError("test functions must have S values")

    @property
    def S(self) -> int:
        return self.eta0.size

    @property
    def T(self) -> int:
        return len(self.M)


@dataclass
class FlowMarginals:
    eta: list  # eta[t] = eta_hat[t - 1] M[t]; eta[0] = eta0
    eta_hat: list


def exact_marginals(flow: FiniteStateFlow) -> FlowMarginals:
    eta, eta_hat = [flow.eta0.copy()], [flow.eta0.copy()]
    for m, g in zip(flow.M, flow.G):
        e = eta_hat[-1] @ m
        h = g * e
        eta.append(e)
        eta_hat.append(h / h.sum())
    return FlowMarginals(eta, eta_hat)


def flow_target(flow: FiniteStateFlow) -> float:
    """The weighted sum ``sum_t beta_t eta_hat_t(xi_t)``."""
    mg = exact_marginals(flow)
    return float(sum(b * (e @ x) for b, e, x in zip(flow.beta, mg.eta_hat, flow.xi)))


def log_normalizer(flow: FiniteStateFlow) -> float:
    """``log prod_t eta_t(G_t)``, the quantity the direct estimator targets."""
    mg = exact_marginals(flow)
    return float(sum(np.log(e @ g) for e, g in zip(mg.eta[1:], flow.G)))


def _propagate(flow, mg, t, f):
    # M_t(G_t [f - eta_hat_t f]) / eta_t(G_t), a function on the state space
    g = flow.G[t - 1]
    centred = g * (f - mg.eta_hat[t] @ f)
    return flow.M[t - 1] @ centred / (mg.eta[t] @ g)


def _local(flow, mg, t, f):
    if t == 0:
        e = mg.eta_hat[0]
        return float(e @ (f - e @ f) ** 2)
    g = flow.G[t - 1]
    e = mg.eta_hat[t]
    return float(e @ (g * (f - e @ f) ** 2) / (mg.eta[t] @ g))


def variance_recursion(flow: FiniteStateFlow) -> float:
    """Asymptotic variance of ``sqrt(N) * sum_t beta_t (eta_hat_t^N - eta_hat_t)(xi_t)``.

    Evaluates the forward recursion in which the test function at ``t - 1``
    absorbs the propagated error of ``t`` scaled by ``beta_t / beta_{t-1}``;
    every coefficient before the last must therefore be nonzero.
    """
    beta = flow.beta
    if flow.T and np.any(beta[:-1] == 0):
        raise ValueError("variance recursion needs nonzero beta before the last step")
    mg = exact_marginals(flow)
    f = flow.xi[flow.T].copy()
    total = 0.0
    for t in range(flow.T, 0, -1):
        total += beta[t] ** 2 * _local(flow, mg, t, f)
        f = flow.xi[t - 1] + beta[t] / beta[t - 1] * _propagate(flow, mg, t, f)
    return float(total + beta[0] ** 2 * _local(flow, mg, 0, f))


def variance_backward(flow: FiniteStateFlow) -> float:
    """Same variance with the coefficients folded into the test functions;
    also valid when some coefficients vanish."""
    mg = exact_marginals(flow)
    phi = flow.beta[flow.T] * flow.xi[flow.T]
    total = 0.0
    for t in range(flow.T, 0, -1):
        total += _local(flow, mg, t, phi)
        phi = flow.beta[t - 1] * flow.xi[t - 1] + _propagate(flow, mg, t, phi)
    return float(total + _local(flow, mg, 0, phi))


def simulate_flow(flow: FiniteStateFlow, N: int, R: int, rng: np.random.Generator):
    """``R`` independent particle systems of size ``N``, tracked as state counts.

    Returns the weighted-sum statistic and the log direct estimate of
    ``prod_t eta_t(G_t)`` for every replicate.
    """
    S = flow.S
    counts = rng.multinomial(N, flow.eta0, size=R)
    # centring on one value keeps constant test functions free of rounding noise
    c = [x[0] for x in flow.xi]
    stat = flow.beta[0] * (c[0] + counts @ (flow.xi[0] - c[0]) / N)
    log_z = np.zeros(R)
    w = counts.astype(float)
    for t in range(1, flow.T + 1):
        probs = w / w.sum(axis=1, keepdims=True)
        sel = rng.multinomial(N, probs)
        moved = np.zeros((R, S), dtype=np.int64)
        m = flow.M[t - 1]
        for s in range(S):
            moved += rng.multinomial(sel[:, s], m[s])
        g = flow.G[t - 1]
        w = moved * g
        tot = w.sum(axis=1)
        log_z += np.log(tot / N)
        stat = stat + flow.beta[t] * (c[t] + (w @ (flow.xi[t] - c[t])) / tot)
    return stat, log_z


@dataclass
class CltCheck:
    N: int
    empirical: float
    predicted: float

    @property
    def ratio(self) -> float:
        if self.predicted == 0:
            return 1.0 if self.empirical == 0 else float("inf")
        return self.empirical / self.predicted


def empirical_clt_check(flow: FiniteStateFlow, N: int, R: int,
                        rng: np.random.Generator) -> CltCheck:
    """Sample variance of ``sqrt(N) * (estimate - exact)`` over ``R`` replicates
    against the predicted asymptotic variance."""
    stat, _ = simulate_flow(flow, N, R, rng)
    err = np.sqrt(N) * (stat - flow_target(flow))
    emp = float(np.var(err, ddof=1)) if R > 1 else 0.0
    return CltCheck(N, emp, variance_backward(flow))


def brute_force_marginals(flow: FiniteStateFlow) -> list:
    """Normalized time marginals by summing over every state path."""
    S, T = flow.S, flow.T
    out = []
    for t in range(T + 1):
        acc = np.zeros(S)
        for path in itertools.product(range(S), repeat=t + 1):
            w = flow.eta0[path[0]]
            for i in range(1, t + 1):
                w *= flow.M[i - 1][path[i - 1], path[i]] * flow.G[i - 1][path[i]]
            acc[path[-1]] += w
        out.append(acc / acc.sum())
    return out


def expected_direct_estimate(flow: FiniteStateFlow, N: int) -> float:
    """Exact ``E[prod_t eta_t^N(G_t)]`` by enumerating every particle history.

    Exponential in ``N`` and ``T``; meant for tiny systems.
    """
    S = flow.S

    def step(t, states, weights):
        if t > flow.T:
            return 1.0
        probs = weights / weights.sum()
        m, g = flow.M[t - 1], flow.G[t - 1]
        total = 0.0
        for anc in itertools.product(range(N), repeat=N):
            p_anc = np.prod(probs[list(anc)])
            for new in itertools.product(range(S), repeat=N):
                p = p_anc * np.prod([m[states[a], s] for a, s in zip(anc, new)])
                if p == 0:
                    continue
                w = g[list(new)]
                total += p * w.mean() * step(t + 1, new, w)
        return total

    total = 0.0
    for init in itertools.product(range(S), repeat=N):
        p = np.prod(flow.eta0[list(init)])
        total += p * step(1, init, np.ones(N))
    return float(total)


def metropolis_matrix(target: np.ndarray) -> np.ndarray:
    """Metropolis kernel with a uniform proposal over the other states."""
    target = np.asarray(target, dtype=float)
    S = target.size
    if S == 1:
        return np.ones((1, 1))
    with np.errstate(divide="ignore", invalid="ignore"):
        acc = np.minimum(1.0, target[None, :] / target[:, None])
    m = np.where(np.eye(S, dtype=bool), 0.0, acc / (S - 1))
    m[np.diag_indices(S)] = 1.0 - m.sum(axis=1)
    return m


def trapezoid_betas(alphas) -> np.ndarray:
    a = np.asarray(alphas, dtype=float)
    b = np.zeros(a.size)
    if a.size > 1:
        b[0] = 0.5 * (a[1] - a[0])
        b[-1] = 0.5 * (a[-1] - a[-2])
        b[1:-1] = 0.5 * (a[2:] - a[:-2])
    return b


def tempering_flow(prior, likelihood, alphas) -> FiniteStateFlow:
    """Flow of a tempering sampler on a finite space.

    ``eta_hat_t`` is the tempered posterior at ``alphas[t]``, the test functions
    are the log-likelihood and the trapezoid coefficients make the weighted sum
    equal to the trapezoid path-sampling integral of the log-likelihood.
    """
    prior = np.asarray(prior, dtype=float)
    lik = np.asarray(likelihood, dtype=float)
    a = np.asarray(alphas, dtype=float)
    if np.any(np.diff(a) <= 0):
        raise ValueError("alphas must increase")
    loglik = np.log(lik)
    M, G = [], []
    for t in range(1, a.size):
        prev = prior * lik ** a[t - 1]
        M.append(metropolis_matrix(prev / prev.sum()))
        G.append(lik ** (a[t] - a[t - 1]))
    first = prior * lik ** a[0]
    return FiniteStateFlow(first / first.sum(), M, G, [loglik] * a.size, trapezoid_betas(a))
