"""Monetary risk measures used as agent preferences (an agent maximises ``-risk``).

Measures in the ``"payoff"`` domain score a payoff vector over the outcome
space; :class:`QuadraticRisk` lives in the ``"shares"`` domain and scores a
share vector directly, which is how single-security markets on a continuous
outcome (e.g. a Gaussian belief) are handled without discretising it.
"""

from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.special import logsumexp, rel_entr

from ._simplex import MAX_STATES, simplex_sup
from .core import SecurityBasis, _as_vector, asset_payoff

BELIEF_ATOL = 1e-12


def check_belief(belief, name: str = "belief") -> np.ndarray:
    p = _as_vector(belief, name)
    if np.any(p < 0):
        raise ValueError(f"{name} has negative entries")
    if abs(p.sum() - 1.0) > BELIEF_ATOL:
        raise ValueError(f"{name} must sum to 1 (sums to {p.sum():.15g})")
    return p


def numeric_gradient(f: Callable[[np.ndarray], float], x: np.ndarray, rel_step: float = 1e-6):
    """Central differences with step ``rel_step * (1 + |x_i|)``."""
    x = np.asarray(x, dtype=float)
    g = np.empty_like(x)
    for i in range(x.shape[0]):
        h = rel_step * (1.0 + abs(x[i]))
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (f(x + e) - f(x - e)) / (2 * h)
    return g


class RiskMeasure(ABC):
    """Base class. ``risk`` is in cash units; lower means more attractive."""

    domain = "payoff"
    convex = True

    @abstractmethod
    def risk(self, x) -> float:
        ...

    def __call__(self, x) -> float:
        return self.risk(x)

    def share_risk(self, shares, basis: SecurityBasis | None = None) -> float:
        if self.domain == "shares":
            return self.risk(shares)
        if basis is None:
            raise ValueError(f"{type(self).__name__} needs a security basis to score shares")
        return self.risk(asset_payoff(shares, basis))

    def share_gradient(self, shares, basis: SecurityBasis | None = None) -> np.ndarray:
        return numeric_gradient(lambda s: self.share_risk(s, basis), shares)

    def share_hessian(self, shares, basis: SecurityBasis | None = None):
        """Analytic Hessian in share space, or None when not available."""
        return None


@dataclass(frozen=True, eq=False)
class EntropicRisk(RiskMeasure):
    """``(1/theta) log E_P[exp(-theta X)]`` for belief ``P`` over the states."""

    theta: float
    belief: np.ndarray

    def __post_init__(self):
        if not self.theta > 0:
            raise ValueError(f"theta must be positive, got {self.theta}")
        p = check_belief(self.belief).copy()
        p.flags.writeable = False
        object.__setattr__(self, "theta", float(self.theta))
        object.__setattr__(self, "belief", p)

    def _check(self, x):
        x = _as_vector(x, "payoff")
        if x.shape != self.belief.shape:
            raise ValueError(f"payoff has {x.shape[0]} states, belief has {self.belief.shape[0]}")
        return x

    def risk(self, x) -> float:
        x = self._check(x)
        return float(logsumexp(-self.theta * x, b=self.belief) / self.theta)

    def tilted(self, x) -> np.ndarray:
        """The maximising measure in the dual form: ``Q ∝ P exp(-theta x)``."""
        x = self._check(x)
        a = -self.theta * x
        with np.errstate(divide="ignore"):
            a = np.where(self.belief > 0, a + np.log(self.belief), -np.inf)
        return np.exp(a - logsumexp(a))

    def share_gradient(self, shares, basis=None):
        if basis is None:
            raise ValueError("EntropicRisk needs a security basis to score shares")
        q = self.tilted(asset_payoff(shares, basis))
        return -(basis.payoff_matrix @ q)

    def share_hessian(self, shares, basis=None):
        if basis is None:
            raise ValueError("EntropicRisk needs a security basis to score shares")
        q = self.tilted(asset_payoff(shares, basis))
        xi = basis.payoff_matrix
        cov = np.diag(q) - np.outer(q, q)
        return self.theta * (xi @ cov @ xi.T)


@dataclass(frozen=True, eq=False)
class VaRRisk(RiskMeasure):
    """Value at Risk at level ``alpha`` as the discrete empirical quantile of the loss.

    Not convex, so agents using it cannot run in exact mode.
    """

    alpha: float
    belief: np.ndarray

    convex = False

    def __post_init__(self):
        if not 0 < self.alpha < 1:
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha}")
        p = check_belief(self.belief).copy()
        p.flags.writeable = False
        object.__setattr__(self, "alpha", float(self.alpha))
        object.__setattr__(self, "belief", p)

    def risk(self, x) -> float:
        x = _as_vector(x, "payoff")
        if x.shape != self.belief.shape:
            raise ValueError(f"payoff has {x.shape[0]} states, belief has {self.belief.shape[0]}")
        support = self.belief > 0
        loss = -x[support]
        prob = self.belief[support]
        limit = 1.0 - self.alpha + 1e-12
        # the tail probability only jumps at attained losses, so the infimum is one of them
        for level in np.unique(loss):
            if prob[loss > level].sum() <= limit:
                return float(level)
        return float(loss.max())


@dataclass(frozen=True, eq=False)
class QuadraticRisk(RiskMeasure):
    """``-mu . s + (scale / 2) |s|^2`` evaluated directly on shares."""

    mu: float | np.ndarray = 0.0
    scale: float = 1.0

    domain = "shares"

    def __post_init__(self):
        if not self.scale >= 0:
            raise ValueError(f"scale must be non-negative, got {self.scale}")
        mu = np.asarray(self.mu, dtype=float)
        if not np.all(np.isfinite(mu)):
            raise ValueError("mu must be finite")
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "scale", float(self.scale))

    def risk(self, s) -> float:
        s = _as_vector(s, "shares")
        return float(-np.sum(self.mu * s) + 0.5 * self.scale * (s @ s))

    def share_gradient(self, shares, basis=None):
        s = _as_vector(shares, "shares")
        return -np.broadcast_to(self.mu, s.shape) + self.scale * s

    def share_hessian(self, shares, basis=None):
        n = np.asarray(shares).reshape(-1).shape[0]
        return self.scale * np.eye(n)


@dataclass(frozen=True, eq=False)
class PenaltyFunctional:
    """A penalty ``alpha(Q)`` on the probability simplex.

    With ``batched=True`` the callable receives an ``(m, |Ω|)`` array and
    returns ``m`` values, which makes the lattice search much faster.
    """

    alpha: Callable[[np.ndarray], float]
    batched: bool = False

    def __call__(self, q):
        return self.alpha(q)


def kl_penalty(belief, theta: float) -> PenaltyFunctional:
    """``(1/theta) KL(Q || belief)``, the penalty dual to :class:`EntropicRisk`."""
    p = check_belief(belief)

    def alpha(Q):
        return rel_entr(Q, p).sum(axis=-1) / theta

    return PenaltyFunctional(alpha, batched=True)


def zero_penalty(n_states: int) -> PenaltyFunctional:
    return PenaltyFunctional(lambda Q: np.zeros(np.asarray(Q).shape[:-1]), batched=True)


@dataclass(frozen=True, eq=False)
class PenaltyRisk(RiskMeasure):
    """Convex risk measure defined by its penalty, evaluated with the simplex oracle."""

    penalty: PenaltyFunctional
    tol: float = 1e-4

    def risk(self, x) -> float:
        return penalty_risk_oracle(x, self.penalty, self.tol)


def entropic_risk(payoff, m: EntropicRisk) -> float:
    return m.risk(payoff)


def var_risk(payoff, m: VaRRisk) -> float:
    return m.risk(payoff)


def quadratic_risk(shares, m: QuadraticRisk) -> float:
    return m.risk(shares)


def gross_risk(cash: float, x, m: RiskMeasure) -> float:
    """Risk of cash plus a risky asset, by translation invariance."""
    return m.risk(x) - cash


def penalty_risk_oracle(payoff, pen: PenaltyFunctional, tol: float = 1e-4) -> float:
    """``sup_Q E_Q[-X] - alpha(Q)`` by brute-force search over the simplex."""
    x = _as_vector(payoff, "payoff")
    if x.shape[0] > MAX_STATES:
        raise ValueError(f"oracle supports at most {MAX_STATES} states")
    return simplex_sup(-x, pen.alpha, batched=pen.batched, tol=tol).value
