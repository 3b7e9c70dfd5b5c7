"""Cost-function market makers.

Pricing is path independent: a trade ``delta`` against outstanding inventory
``Y`` costs ``c(Y + delta) - c(Y)``. The instantaneous price is the gradient
of ``c``; for LMSR it is the softmax of ``theta0 * Y`` and therefore a
probability vector.
"""

from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.special import logsumexp, softmax, xlogy

from ._simplex import MAX_STATES, simplex_sup
from .core import DimensionError, SecurityBasis, _as_vector
from .risk import PenaltyFunctional, numeric_gradient


class CostFunction(ABC):
    """Potential over the market maker's outstanding share inventory."""

    n_securities: int | None = None

    @abstractmethod
    def cost(self, Y) -> float:
        ...

    def price(self, Y) -> np.ndarray:
        return numeric_gradient(self.cost, self._check(Y))

    def hessian(self, Y):
        """Analytic Hessian, or None."""
        return None

    def __call__(self, Y) -> float:
        return self.cost(Y)

    def _check(self, Y) -> np.ndarray:
        y = _as_vector(Y, "inventory")
        if self.n_securities is not None and y.shape[0] != self.n_securities:
            raise DimensionError(
                f"inventory has {y.shape[0]} entries, cost function expects {self.n_securities}"
            )
        return y


@dataclass(frozen=True, eq=False)
class LMSRCost(CostFunction):
    """Logarithmic market scoring rule ``(1/theta0) log sum_k exp(theta0 Y_k)``."""

    theta0: float
    n_securities: int | None = None

    def __post_init__(self):
        if not self.theta0 > 0:
            raise ValueError(f"theta0 must be positive, got {self.theta0}")
        object.__setattr__(self, "theta0", float(self.theta0))

    def cost(self, Y) -> float:
        y = self._check(Y)
        return float(logsumexp(self.theta0 * y) / self.theta0)

    def price(self, Y) -> np.ndarray:
        return softmax(self.theta0 * self._check(Y))

    def hessian(self, Y):
        p = self.price(Y)
        return self.theta0 * (np.diag(p) - np.outer(p, p))


@dataclass(frozen=True, eq=False)
class QuadraticCost(CostFunction):
    """Quadratic scoring rule ``(theta0 / 2) |Y|^2``."""

    theta0: float
    n_securities: int | None = None

    def __post_init__(self):
        if not self.theta0 > 0:
            raise ValueError(f"theta0 must be positive, got {self.theta0}")
        object.__setattr__(self, "theta0", float(self.theta0))

    def cost(self, Y) -> float:
        y = self._check(Y)
        return float(0.5 * self.theta0 * (y @ y))

    def price(self, Y) -> np.ndarray:
        return self.theta0 * self._check(Y)

    def hessian(self, Y):
        return self.theta0 * np.eye(self._check(Y).shape[0])


class FunctionCost(CostFunction):
    """Arbitrary convex potential; gradient falls back to central differences."""

    def __init__(
        self,
        fn: Callable[[np.ndarray], float],
        grad: Callable[[np.ndarray], np.ndarray] | None = None,
        hess: Callable[[np.ndarray], np.ndarray] | None = None,
        n_securities: int | None = None,
    ):
        self.fn = fn
        self.grad = grad
        self.hess = hess
        self.n_securities = n_securities

    def cost(self, Y) -> float:
        return float(self.fn(self._check(Y)))

    def price(self, Y) -> np.ndarray:
        y = self._check(Y)
        if self.grad is None:
            return numeric_gradient(self.fn, y)
        return np.asarray(self.grad(y), dtype=float)

    def hessian(self, Y):
        if self.hess is None:
            return None
        return np.asarray(self.hess(self._check(Y)), dtype=float)


def cost(c: CostFunction, Y) -> float:
    return c.cost(Y)


def price(c: CostFunction, Y) -> np.ndarray:
    return c.price(Y)


def incremental_cost(c: CostFunction, Y_prev, delta) -> float:
    """What a trader pays to buy ``delta`` when ``Y_prev`` is outstanding."""
    y = _as_vector(Y_prev, "inventory")
    d = _as_vector(delta, "delta")
    if y.shape != d.shape:
        raise DimensionError(f"inventory has {y.shape[0]} entries, trade has {d.shape[0]}")
    return c.cost(y + d) - c.cost(y)


def lmsr_penalty(theta0: float) -> PenaltyFunctional:
    """Scaled negative entropy ``(1/theta0) sum Q log Q``, whose conjugate is LMSR."""
    return PenaltyFunctional(lambda Q: xlogy(Q, Q).sum(axis=-1) / theta0, batched=True)


def duality_based_cost_oracle(
    R: PenaltyFunctional, Y, tol: float = 1e-4, basis: SecurityBasis | None = None
) -> float:
    """``sup_Q E_Q[X] - R(Q)`` where ``X`` is the payoff of inventory ``Y``.

    Without a basis, ``Y`` is read as a payoff over the states directly
    (Arrow-Debreu securities).
    """
    y = _as_vector(Y, "inventory")
    x = y @ basis.payoff_matrix if basis is not None else y
    if x.shape[0] > MAX_STATES:
        raise ValueError(f"oracle supports at most {MAX_STATES} states")
    return simplex_sup(x, R.alpha, batched=R.batched, tol=tol).value
