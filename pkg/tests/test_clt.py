import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from smcevidence.clt import (FiniteStateFlow, brute_force_marginals, empirical_clt_check,
                             exact_marginals, expected_direct_estimate, flow_target,
                             log_normalizer, metropolis_matrix, simulate_flow, tempering_flow,
                             trapezoid_betas, variance_backward, variance_recursion)
from smcevidence.particles import make_rng


def random_flow(seed, S, T, zero_beta=False):
    rng = make_rng(seed)
    M = [rng.dirichlet(np.ones(S), size=S) for _ in range(T)]
    G = [rng.uniform(0.1, 3.0, S) for _ in range(T)]
    xi = [rng.normal(size=S) for _ in range(T + 1)]
    beta = rng.uniform(0.2, 1.0, T + 1)
    if zero_beta and T:
        beta[rng.integers(T)] = 0.0
    return FiniteStateFlow(rng.dirichlet(np.ones(S)), M, G, xi, beta)


flows = st.builds(random_flow, st.integers(0, 10_000), st.integers(1, 4), st.integers(0, 3))


def two_state(g=(2.0, 1.0)):
    return FiniteStateFlow([0.5, 0.5], [np.eye(2)], [g], [np.zeros(2), np.array([1.0, 0.0])],
                           [1.0, 1.0])


class TestMarginals:
    def test_hand_example(self):
        assert exact_marginals(two_state()).eta_hat[1] == pytest.approx([2 / 3, 1 / 3])
        assert log_normalizer(two_state()) == pytest.approx(np.log(1.5))

    def test_unit_potentials_give_markov_chain(self):
        f = random_flow(1, 3, 3)
        f.G = [np.ones(3)] * 3
        mg = exact_marginals(f)
        law = f.eta0
        for t in range(1, 4):
            law = law @ f.M[t - 1]
            assert np.allclose(mg.eta_hat[t], law)
        assert log_normalizer(f) == pytest.approx(0.0, abs=1e-15)

    @given(flows, st.floats(0.01, 100))
    def test_potential_scaling(self, f, c):
        a = exact_marginals(f).eta_hat
        z = log_normalizer(f)
        f.G = [c * g for g in f.G]
        assert all(np.allclose(x, y) for x, y in zip(a, exact_marginals(f).eta_hat))
        assert log_normalizer(f) == pytest.approx(z + f.T * np.log(c))

    @settings(max_examples=30)
    @given(flows)
    def test_brute_force(self, f):
        for a, b in zip(exact_marginals(f).eta_hat, brute_force_marginals(f)):
            assert np.allclose(a, b, atol=1e-12, rtol=0)


class TestVariance:
    def test_no_steps(self):
        f = FiniteStateFlow([0.2, 0.8], [], [], [np.array([1.0, 3.0])], [0.5])
        var = 0.2 * 0.8 * 2.0 ** 2
        assert variance_recursion(f) == pytest.approx(0.25 * var)
        assert variance_backward(f) == pytest.approx(0.25 * var)

    def test_two_state_one_step(self):
        # delta method: the state-1 fraction has variance 2p(1-p)/N after sampling
        # and one resampling; the weighted mean is g1 q / (g1 q + g2 (1 - q))
        p, (g1, g2) = 0.5, (2.0, 1.0)
        h_prime = g1 * g2 / (g1 * p + g2 * (1 - p)) ** 2
        expected = 2 * p * (1 - p) * h_prime ** 2
        assert expected == pytest.approx(32 / 81)
        assert variance_recursion(two_state()) == pytest.approx(expected)

    @given(flows)
    def test_constant_test_functions(self, f):
        f.xi = [np.full(f.S, c) for c in range(f.T + 1)]
        assert variance_backward(f) == pytest.approx(0.0, abs=1e-12)

    @given(flows)
    def test_recursion_equals_backward(self, f):
        assert variance_recursion(f) == pytest.approx(variance_backward(f), rel=1e-10, abs=1e-12)

    @given(flows)
    def test_nonnegative(self, f):
        assert variance_backward(f) >= -1e-12

    @given(flows, st.lists(st.floats(-10, 10), min_size=4, max_size=4))
    def test_shift_invariance(self, f, shifts):
        v = variance_backward(f)
        f.xi = [x + c for x, c in zip(f.xi, shifts)]
        assert variance_backward(f) == pytest.approx(v, rel=1e-9, abs=1e-10)

    def test_zero_coefficient(self):
        f = random_flow(3, 3, 3, zero_beta=True)
        with pytest.raises(ValueError):
            variance_recursion(f)
        assert np.isfinite(variance_backward(f))


class TestSimulation:
    def test_unbiased_normalizer_enumeration(self):
        f = random_flow(4, 2, 2)
        e = expected_direct_estimate(f, 2)
        assert e == pytest.approx(np.exp(log_normalizer(f)), rel=1e-12)

    def test_one_particle_enumeration(self):
        f = random_flow(5, 3, 2)
        assert expected_direct_estimate(f, 1) == pytest.approx(np.exp(log_normalizer(f)))

    def test_simulation_means(self):
        f = random_flow(6, 3, 2)
        stat, log_z = simulate_flow(f, 400, 2000, make_rng(7))
        assert abs(stat.mean() - flow_target(f)) < 4 * stat.std() / np.sqrt(2000) + 1e-3
        z = np.exp(log_z)
        assert abs(z.mean() - np.exp(log_normalizer(f))) < 4 * z.std() / np.sqrt(2000)

    def test_empirical_matches_prediction(self):
        f = tempering_flow([0.5, 0.3, 0.2], [1.0, 3.0, 0.4], [0.0, 0.3, 0.6, 1.0])
        chk = empirical_clt_check(f, 300, 2000, make_rng(8))
        assert chk.ratio == pytest.approx(1.0, abs=0.2)


class TestTempering:
    def test_metropolis_kernel(self):
        pi = np.array([0.1, 0.6, 0.3])
        m = metropolis_matrix(pi)
        assert np.allclose(m.sum(axis=1), 1.0)
        assert np.allclose(pi @ m, pi)
        flux = pi[:, None] * m
        assert np.allclose(flux, flux.T)

    def test_trapezoid_betas(self):
        b = trapezoid_betas([0.0, 0.3, 0.6, 1.0])
        assert np.allclose(b, [0.15, 0.3, 0.35, 0.2])
        assert b.sum() == pytest.approx(1.0)

    def test_flow_is_tempered_posterior(self):
        prior, lik, a = np.array([0.5, 0.3, 0.2]), np.array([1.0, 3.0, 0.4]), [0.0, 0.5, 1.0]
        f = tempering_flow(prior, lik, a)
        for t, al in enumerate(a):
            post = prior * lik ** al
            assert np.allclose(exact_marginals(f).eta_hat[t], post / post.sum())
        assert log_normalizer(f) == pytest.approx(np.log(prior @ lik))
        means = [(prior * lik ** al / (prior @ lik ** al)) @ np.log(lik) for al in a]
        assert flow_target(f) == pytest.approx(0.25 * means[0] + 0.5 * means[1] + 0.25 * means[2])

    def test_validation(self):
        with pytest.raises(ValueError):
            FiniteStateFlow([0.5, 0.6], [], [], [np.zeros(2)], [1.0])
        with pytest.raises(ValueError):
            FiniteStateFlow([0.5, 0.5], [np.eye(2)], [np.array([1.0, 0.0])],
                            [np.zeros(2)] * 2, [1.0, 1.0])
        with pytest.raises(ValueError):
            tempering_flow([0.5, 0.5], [1.0, 2.0], [0.0, 0.0, 1.0])
