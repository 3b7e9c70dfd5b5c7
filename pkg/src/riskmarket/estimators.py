"""scikit-learn estimators that solve their problem by running a market.

They follow the usual contract: hyperparameters in ``__init__``, learned
state in trailing-underscore attributes set by ``fit``, so they clone, grid
search and sit in pipelines like any other estimator.
"""

from __future__ import annotations

import numpy as np
from scipy.special import expit
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.multiclass import check_classification_targets
from sklearn.utils.validation import check_array, check_is_fitted, validate_data

from .agent import BacktrackParams
from .apps import (
    Dataset,
    build_gaussian_map_market,
    build_logistic_market,
    build_opinion_pool_market,
    gaussian_map_closed_form,
    logistic_objective,
)
from .duality import analytic_log_pool
from .engine import QueuePolicy, StopRule


class LogOpinionPool(BaseEstimator):
    """Aggregate probability vectors by trading them in an LMSR market.

    Parameters
    ----------
    theta0 : float
        Market maker liquidity coefficient; its inverse is the weight of the
        uniform belief in the pool.
    thetas : float or array of shape (n_agents,)
        Agents' risk coefficients; agent ``n`` gets pool weight ``1 / thetas[n]``.
    policy : {"round_robin", "random", "greedy"}
    max_rounds, eps, random_state
        Stop rule and queue seed.

    Attributes
    ----------
    pooled_ : ndarray of shape (n_outcomes,)
        Final market price.
    analytic_pool_ : ndarray of shape (n_outcomes,)
        Closed-form minimiser of the weighted KL objective.
    converged_, n_rounds_, objective_, run_
    """

    def __init__(self, theta0=1.0, thetas=1.0, policy="round_robin", max_rounds=None, eps=1e-8,
                 random_state=0):
        self.theta0 = theta0
        self.thetas = thetas
        self.policy = policy
        self.max_rounds = max_rounds
        self.eps = eps
        self.random_state = random_state

    def fit(self, X, y=None):
        """``X`` holds one belief (a probability vector) per row."""
        X = check_array(X, dtype=float)
        market = build_opinion_pool_market(X, self.thetas, self.theta0)
        run = market.run(QueuePolicy(self.policy, self.random_state), StopRule(self.max_rounds, self.eps))
        self.run_ = run
        self.pooled_ = run.final_price
        self.analytic_pool_ = analytic_log_pool(X, self.thetas, self.theta0)
        self.converged_ = run.converged
        self.n_rounds_ = run.rounds
        self.objective_ = run.state.objective
        self.n_features_in_ = X.shape[1]
        return self

    def predict_proba(self, X=None):
        check_is_fitted(self)
        if X is None:
            return self.pooled_.copy()
        n = check_array(X, dtype=float).shape[0]
        return np.tile(self.pooled_, (n, 1))


class GaussianMAPMarket(BaseEstimator):
    """Posterior mean of a Gaussian with known spread, found by a two-party market.

    ``fit`` reads the sample mean as the agent's belief centre and ``1/N`` as
    its risk coefficient; the market maker supplies a N(0, 1) prior
    weighted by ``1/theta0``.
    """

    def __init__(self, sigma=1.0, theta0=1.0):
        self.sigma = sigma
        self.theta0 = theta0

    def fit(self, X, y=None):
        X = check_array(X, dtype=float, ensure_2d=False).reshape(-1)
        mu1, theta1 = float(X.mean()), 1.0 / X.shape[0]
        run = build_gaussian_map_market(mu1, self.sigma, theta1, self.theta0).run()
        self.run_ = run
        self.shares_ = float(run.state.inventory[0])
        self.mean_ = float(run.final_price[0])
        self.closed_form_ = gaussian_map_closed_form(mu1, self.sigma, theta1, self.theta0)
        self.converged_ = run.converged
        return self


class MarketLogisticRegression(ClassifierMixin, BaseEstimator):
    """l2-regularised logistic regression (no intercept) solved by a market.

    Minimises ``mean(log(1 + exp(-y w.x))) + lam/2 |w|^2``. With
    ``solver="coordinate"`` each feature has its own agent, giving
    coordinate descent; ``solver="gradient"`` uses one agent for all
    features, giving gradient descent.
    """

    def __init__(self, lam=0.1, solver="coordinate", max_rounds=None, eps=1e-8, a0=1.0, beta=0.5,
                 sigma=1e-4):
        self.lam = lam
        self.solver = solver
        self.max_rounds = max_rounds
        self.eps = eps
        self.a0 = a0
        self.beta = beta
        self.sigma = sigma

    def fit(self, X, y):
        X, y = validate_data(self, X, y, dtype=float)
        check_classification_targets(y)
        self.classes_ = np.unique(y)
        if len(self.classes_) != 2:
            raise ValueError(f"need exactly two classes, got {len(self.classes_)}")
        signs = np.where(y == self.classes_[1], 1.0, -1.0)
        data = Dataset(X, signs)
        market = build_logistic_market(
            data, self.lam, self.solver, backtrack=BacktrackParams(self.a0, self.beta, self.sigma)
        )
        run = market.run(stop=StopRule(self.max_rounds, self.eps))
        self.run_ = run
        self.coef_ = run.state.inventory.copy()
        self.objective_ = logistic_objective(self.coef_, data, self.lam)
        self.converged_ = run.converged
        self.n_rounds_ = run.rounds
        return self

    def decision_function(self, X):
        check_is_fitted(self)
        X = validate_data(self, X, dtype=float, reset=False)
        return X @ self.coef_

    def predict_proba(self, X):
        p = expit(self.decision_function(X))
        return np.column_stack([1 - p, p])

    def predict(self, X):
        scores = self.decision_function(X)
        return self.classes_[(scores > 0).astype(int)]
