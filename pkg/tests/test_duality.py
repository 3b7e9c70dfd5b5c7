import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from riskmarket.agent import AgentSpec
from riskmarket.apps import build_gaussian_map_market, build_opinion_pool_market, gaussian_map_closed_form
from riskmarket.core import SecurityBasis
from riskmarket.duality import (
    PrimalProblem,
    UnsupportedFamilyError,
    analytic_log_pool,
    dual_objective_from_market,
    entropy_term,
    fenchel_transform_oracle,
    kl_term,
    recover_primal,
    weak_duality_check,
)
from riskmarket.pricing import FunctionCost, LMSRCost, QuadraticCost
from riskmarket.risk import EntropicRisk, QuadraticRisk, VaRRisk


def pool_by_hand(beliefs, thetas, theta0):
    """Oracle: weighted geometric mean written out in plain Python."""
    K = len(beliefs[0])
    w0 = 1 / theta0
    total = w0 + sum(1 / t for t in thetas)
    un = [
        math.exp(sum(math.log(p[k]) / t for p, t in zip(beliefs, thetas)) / total + w0 / total * math.log(1 / K))
        for k in range(K)
    ]
    return [u / sum(un) for u in un]


class TestFenchelOracle:
    def test_zero_functional_is_max(self):
        x = np.array([0.1, 0.7, -0.3])
        assert fenchel_transform_oracle(lambda P: 0.0, x) == pytest.approx(0.7, abs=1e-9)

    @pytest.mark.parametrize("theta", [0.5, 1.0, 2.0])
    def test_kl_conjugate_is_entropic_risk(self, theta):
        p, x = [0.2, 0.5, 0.3], np.array([1.0, -0.4, 0.3])
        got = fenchel_transform_oracle(kl_term(p, theta), -x)
        assert got == pytest.approx(EntropicRisk(theta, p).risk(x), abs=1e-6)

    @pytest.mark.parametrize("theta0", [0.5, 2.0])
    def test_entropy_conjugate_is_lmsr(self, theta0):
        Y = np.array([0.3, -1.0, 0.8, 0.0])
        assert fenchel_transform_oracle(entropy_term(theta0), Y) == pytest.approx(LMSRCost(theta0).cost(Y), abs=1e-6)

    def test_quadratic_on_reals(self):
        # F(P) = |P|^2 / (2a)  ->  F*(x) = a |x|^2 / 2
        a, x = 0.7, np.array([1.5, -2.0])
        got = fenchel_transform_oracle(lambda P: float(P @ P) / (2 * a), x, domain="real")
        assert got == pytest.approx(a * float(x @ x) / 2, abs=1e-8)

    def test_quadratic_with_grid(self):
        grid = np.linspace(-5, 5, 101)[:, None]
        got = fenchel_transform_oracle(lambda P: float(P @ P), np.array([3.0]), domain="real", grid=grid)
        assert got == pytest.approx(9.0 / 4, abs=1e-8)

    def test_biconjugate_of_lmsr(self):
        # sup_Y <Y, P> - C(Y) recovers (1/theta0) sum P log P, up to shifts along ones
        theta0, P = 1.3, np.array([0.2, 0.5, 0.3])
        c = LMSRCost(theta0)
        got = fenchel_transform_oracle(c.cost, P, domain="real", scale=1.0)
        assert got == pytest.approx(entropy_term(theta0)(P), abs=1e-6)

    def test_unknown_domain(self):
        with pytest.raises(ValueError):
            fenchel_transform_oracle(lambda P: 0.0, [1.0], domain="box")


class TestPrimalConstruction:
    def test_lmsr_entropic_terms(self):
        beliefs, thetas, theta0 = [[0.7, 0.3], [0.2, 0.8]], [1.0, 2.0], 0.5
        agents = [AgentSpec(i, EntropicRisk(t, b)) for i, (b, t) in enumerate(zip(beliefs, thetas))]
        primal = dual_objective_from_market(agents, LMSRCost(theta0), SecurityBasis.arrow_debreu(2))
        assert primal.domain == "simplex" and primal.dim == 2
        P = [0.4, 0.6]
        kl = lambda a, b: sum(x * math.log(x / y) for x, y in zip(a, b))
        # market maker's KL to uniform appears shifted by -log K / theta0
        expected = (kl(P, [0.5, 0.5]) - math.log(2)) / theta0 + sum(kl(P, b) / t for b, t in zip(beliefs, thetas))
        assert primal.value(P) == pytest.approx(expected, abs=1e-14)

    def test_lmsr_with_no_agents_needs_size(self):
        with pytest.raises(ValueError):
            dual_objective_from_market([], LMSRCost(1.0))
        primal = dual_objective_from_market([], LMSRCost(1.0), n_securities=3)
        assert primal.value(np.full(3, 1 / 3)) == pytest.approx(-math.log(3), abs=1e-14)

    def test_gaussian_terms(self):
        market = build_gaussian_map_market(2.0, 1.5, 0.5, 0.8)
        primal = dual_objective_from_market(market.agents, market.cost, n_securities=1)
        assert primal.domain == "real"
        mu = np.array([0.3])
        v = 1.5**2 * 0.5
        assert primal.value(mu) == pytest.approx(0.09 / 1.6 + (0.3 - 2.0) ** 2 / (2 * v), abs=1e-14)

    def test_unsupported_families(self):
        ad = SecurityBasis.arrow_debreu(2)
        with pytest.raises(UnsupportedFamilyError):
            dual_objective_from_market([AgentSpec(0, VaRRisk(0.9, [0.5, 0.5]), "gradient_step")], LMSRCost(1.0), ad)
        with pytest.raises(UnsupportedFamilyError):
            dual_objective_from_market([], FunctionCost(lambda y: 0.0, n_securities=2), ad)
        with pytest.raises(UnsupportedFamilyError):
            dual_objective_from_market([], LMSRCost(1.0), SecurityBasis(np.array([[1.0, 1.0], [1.0, -1.0]])))
        with pytest.raises(UnsupportedFamilyError):
            dual_objective_from_market([AgentSpec(0, QuadraticRisk(0.0, 0.0))], QuadraticCost(1.0), n_securities=1)

    def test_domain_validation(self):
        with pytest.raises(ValueError):
            PrimalProblem([], "box", 2)
        with pytest.raises(ValueError):
            PrimalProblem([lambda P: 0.0], "real", 2).value([1.0])


class TestLogPool:
    @pytest.mark.parametrize(
        "beliefs, thetas, theta0",
        [
            ([[0.7, 0.3]], [1.0], 1.0),
            ([[0.7, 0.3], [0.4, 0.6]], [1.0, 3.0], 0.5),
            ([[0.2, 0.3, 0.5], [0.6, 0.3, 0.1], [0.1, 0.1, 0.8]], [0.5, 1.0, 2.0], 4.0),
        ],
    )
    def test_matches_hand_formula(self, beliefs, thetas, theta0):
        np.testing.assert_allclose(analytic_log_pool(beliefs, thetas, theta0), pool_by_hand(beliefs, thetas, theta0),
                                   atol=1e-14)

    def test_single_agent_value(self):
        # sqrt(0.8)/(sqrt(0.8)+sqrt(0.2)) = 2/3
        np.testing.assert_allclose(analytic_log_pool([[0.8, 0.2]], 1.0, 1.0), [2 / 3, 1 / 3], atol=1e-15)

    def test_unbiased_pool_of_identical_beliefs(self):
        q = np.array([0.1, 0.6, 0.3])
        np.testing.assert_allclose(analytic_log_pool([q, q, q], [1.0, 2.0, 0.5], np.inf), q, atol=1e-15)

    def test_pool_is_primal_minimiser(self):
        beliefs, thetas, theta0 = [[0.2, 0.3, 0.5], [0.6, 0.3, 0.1]], [0.7, 1.4], 1.1
        agents = [AgentSpec(i, EntropicRisk(t, b)) for i, (b, t) in enumerate(zip(beliefs, thetas))]
        primal = dual_objective_from_market(agents, LMSRCost(theta0), SecurityBasis.arrow_debreu(3))
        P, _ = primal.solve()
        np.testing.assert_allclose(P, analytic_log_pool(beliefs, thetas, theta0), atol=1e-7)

    def test_rejects_zero_probabilities(self):
        with pytest.raises(ValueError):
            analytic_log_pool([[1.0, 0.0]], 1.0, 1.0)


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(1, 4), K=st.integers(2, 4))
def test_opinion_market_closes_duality_gap(seed, n, K):
    rng = np.random.default_rng(seed)
    beliefs = rng.dirichlet(np.ones(K), size=n) * 0.9 + 0.1 / K
    beliefs /= beliefs.sum(axis=1, keepdims=True)
    thetas = rng.uniform(0.5, 2.0, size=n)
    theta0 = rng.uniform(0.5, 2.0)
    market = build_opinion_pool_market(beliefs, thetas, theta0)
    run = market.run()
    assert run.converged
    primal = dual_objective_from_market(market.agents, market.cost, market.basis)
    L = run.state.objective
    P_hat = recover_primal(market.cost, run.state.inventory)
    np.testing.assert_allclose(P_hat, analytic_log_pool(beliefs, thetas, theta0), atol=1e-5)
    assert abs(weak_duality_check(L, primal, P_hat)) <= 1e-5
    # any other feasible point is no better
    for P in rng.dirichlet(np.ones(K), size=20):
        assert weak_duality_check(L, primal, P) >= -1e-9


@pytest.mark.parametrize("mu1, sigma1, theta1, theta0", [(1.0, 1.0, 1.0, 1.0), (-2.0, 0.5, 3.0, 0.2)])
def test_gaussian_market_closes_duality_gap(mu1, sigma1, theta1, theta0):
    market = build_gaussian_map_market(mu1, sigma1, theta1, theta0)
    run = market.run()
    primal = dual_objective_from_market(market.agents, market.cost, n_securities=1)
    mu_hat = recover_primal(market.cost, run.state.inventory)
    _, mu_map = gaussian_map_closed_form(mu1, sigma1, theta1, theta0)
    assert mu_hat[0] == pytest.approx(mu_map, abs=1e-10)
    assert abs(weak_duality_check(run.state.objective, primal, mu_hat)) <= 1e-10
    for mu in np.linspace(-5, 5, 21):
        assert weak_duality_check(run.state.objective, primal, [mu]) >= -1e-9


def test_weak_duality_holds_before_convergence():
    market = build_opinion_pool_market([[0.9, 0.1], [0.3, 0.7], [0.6, 0.4]])
    primal = dual_objective_from_market(market.agents, market.cost, market.basis)
    state = market.initial_state()
    for t in range(9):
        n = t % 3
        state = market.apply_trade(state, market.propose(state, n), n)
        for P in ([0.5, 0.5], [0.9, 0.1], recover_primal(market.cost, state.inventory)):
            assert weak_duality_check(state.objective, primal, P) >= -1e-9
