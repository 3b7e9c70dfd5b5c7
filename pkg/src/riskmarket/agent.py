"""Portfolio selection for agents trading against a cost-function market maker.

An agent holding shares ``s`` facing inventory ``Y`` scores a trade ``d`` by

    g(d) = rho(s + d) - rho(s) + c(Y + d) - c(Y)

which is the change in its gross risk; cash drops out by translation
invariance. Exact agents minimise ``g`` over their tradable coordinates;
gradient agents take one backtracked gradient step that strictly lowers it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import DimensionError, Portfolio, SecurityBasis
from .pricing import CostFunction, incremental_cost
from .risk import RiskMeasure

EXACT = "exact"
GRADIENT_STEP = "gradient_step"
MODES = (EXACT, GRADIENT_STEP)


class NonConvexRiskError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class AgentSpec:
    id: int
    risk: RiskMeasure
    mode: str = EXACT
    tradable_mask: np.ndarray | None = None
    cash: float = 0.0

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.mode == EXACT and not self.risk.convex:
            raise NonConvexRiskError(
                f"agent {self.id}: exact mode needs a convex risk measure, "
                f"{type(self.risk).__name__} is not"
            )
        if self.tradable_mask is not None:
            mask = np.asarray(self.tradable_mask, dtype=bool).reshape(-1)
            if not mask.any():
                raise ValueError(f"agent {self.id}: tradable mask has no true entry")
            mask.flags.writeable = False
            object.__setattr__(self, "tradable_mask", mask)

    def mask_for(self, n_securities: int) -> np.ndarray:
        if self.tradable_mask is None:
            return np.ones(n_securities, dtype=bool)
        if self.tradable_mask.shape[0] != n_securities:
            raise DimensionError(
                f"agent {self.id}: mask has {self.tradable_mask.shape[0]} entries "
                f"for {n_securities} securities"
            )
        return self.tradable_mask


@dataclass(frozen=True, eq=False)
class TradeProposal:
    agent_id: int
    delta_shares: np.ndarray
    cost: float
    inventory: np.ndarray  # inventory the proposal was priced against
    risk_change: float = 0.0  # g(delta): change of the agent's gross risk
    converged: bool = True
    clipped: bool = False
    iterations: int = 0

    @property
    def is_zero(self) -> bool:
        return not np.any(self.delta_shares)


@dataclass(frozen=True)
class BacktrackParams:
    a0: float = 1.0
    beta: float = 0.5
    sigma: float = 1e-4
    a_min: float = 1e-12

    def __post_init__(self):
        if not (self.a0 > 0 and 0 < self.beta < 1 and 0 <= self.sigma < 1 and self.a_min > 0):
            raise ValueError(f"invalid backtracking parameters {self}")


@dataclass
class _Problem:
    """The trade objective ``g`` restricted to the agent's tradable coordinates."""

    risk: RiskMeasure
    c: CostFunction
    basis: SecurityBasis | None
    shares: np.ndarray
    Y: np.ndarray
    idx: np.ndarray
    rho0: float = field(init=False)
    c0: float = field(init=False)

    def __post_init__(self):
        self.rho0 = self.risk.share_risk(self.shares, self.basis)
        self.c0 = self.c.cost(self.Y)

    def full(self, d: np.ndarray) -> np.ndarray:
        out = np.zeros_like(self.Y)
        out[self.idx] = d
        return out

    def value(self, d) -> float:
        D = self.full(d)
        return (self.risk.share_risk(self.shares + D, self.basis) - self.rho0) + (
            self.c.cost(self.Y + D) - self.c0
        )

    def grad(self, d) -> np.ndarray:
        D = self.full(d)
        g = self.risk.share_gradient(self.shares + D, self.basis) + self.c.price(self.Y + D)
        return g[self.idx]

    def hess(self, d):
        D = self.full(d)
        hr = self.risk.share_hessian(self.shares + D, self.basis)
        if hr is None:
            return None
        hc = self.c.hessian(self.Y + D)
        if hc is None:
            return None
        return (hr + hc)[np.ix_(self.idx, self.idx)]


def _problem(portfolio, agent, c, Y, basis):
    Y = np.asarray(Y, dtype=float)
    shares = np.asarray(portfolio.shares, dtype=float)
    if shares.shape != Y.shape:
        raise DimensionError(f"agent holds {shares.shape[0]} securities, market has {Y.shape[0]}")
    idx = np.flatnonzero(agent.mask_for(Y.shape[0]))
    return _Problem(agent.risk, c, basis, shares, Y, idx)


def _proposal(agent, prob: _Problem, d, **flags) -> TradeProposal:
    D = prob.full(d)
    D.flags.writeable = False
    Y = prob.Y.copy()
    Y.flags.writeable = False
    change = prob.value(d) if np.any(d) else 0.0
    return TradeProposal(agent.id, D, incremental_cost(prob.c, Y, D), Y, change, **flags)


def select_exact(
    portfolio: Portfolio,
    agent: AgentSpec,
    c: CostFunction,
    Y,
    basis: SecurityBasis | None = None,
    tol: float = 1e-10,
    max_iter: int = 500,
    max_step: float = 1e3,
) -> TradeProposal:
    """Rational choice: the trade minimising the agent's post-trade gross risk.

    Damped Newton on the tradable coordinates when both the risk measure and
    the cost function supply Hessians, steepest descent otherwise; Armijo
    backtracking in both cases. The Newton system is solved in the
    least-squares sense because the objective is flat along directions that
    convert shares to cash one for one (the all-ones direction under
    Arrow-Debreu securities with LMSR). Stops when the gradient norm drops to
    ``tol``; trades whose sup-norm would exceed ``max_step`` are clipped.
    """
    if not agent.risk.convex:
        raise NonConvexRiskError(f"agent {agent.id}: exact mode needs a convex risk measure")
    if tol <= 0:
        raise ValueError("tol must be positive")
    prob = _problem(portfolio, agent, c, Y, basis)
    d = np.zeros(prob.idx.shape[0])
    f = 0.0
    g = prob.grad(d)
    converged = False
    clipped = False
    it = 0
    for it in range(1, max_iter + 1):
        gnorm = math.sqrt(g @ g)
        if gnorm <= tol:
            converged = True
            break
        H = prob.hess(d)
        p = None
        if H is not None:
            p = np.linalg.lstsq(H, -g, rcond=1e-12)[0]
            if not np.all(np.isfinite(p)) or p @ g >= 0:
                p = None
        if p is None:
            p = -g
        slope = g @ p
        t = 1.0
        accepted = False
        while t > 1e-16:
            d_new = d + t * p
            f_new = prob.value(d_new)
            if f_new <= f + 1e-4 * t * slope:
                accepted = True
                break
            # below the resolution of f, fall back on the gradient norm as merit
            if abs(f_new - f) <= 1e-14 * (1.0 + abs(prob.rho0) + abs(prob.c0)):
                g_new = prob.grad(d_new)
                if g_new @ g_new < g @ g:
                    accepted = True
                    break
            t *= 0.5
        if not accepted:
            break
        d, f = d_new, f_new
        if np.max(np.abs(d)) > max_step:
            d = d * (max_step / np.max(np.abs(d)))
            f = prob.value(d)
            clipped = True
            break
        g = prob.grad(d)
    if f > 0:
        # never propose a trade that leaves the agent worse off
        d = np.zeros_like(d)
    return _proposal(agent, prob, d, converged=converged, clipped=clipped, iterations=it)


def select_gradient_step(
    portfolio: Portfolio,
    agent: AgentSpec,
    c: CostFunction,
    Y,
    basis: SecurityBasis | None = None,
    backtrack: BacktrackParams = BacktrackParams(),
) -> TradeProposal:
    """One gradient step on the tradable coordinates, step size by backtracking.

    The step ``-a * grad`` is accepted at the largest ``a = a0 * beta**j``
    satisfying the Armijo condition with a strict decrease of the agent's
    gross risk. If no ``a >= a_min`` qualifies the agent stays put.
    """
    prob = _problem(portfolio, agent, c, Y, basis)
    g = prob.grad(np.zeros(prob.idx.shape[0]))
    gg = float(g @ g)
    if gg == 0.0:
        return _proposal(agent, prob, np.zeros_like(g))
    a = backtrack.a0
    it = 0
    while a >= backtrack.a_min:
        it += 1
        d = -a * g
        change = prob.value(d)
        if change < 0 and change <= -backtrack.sigma * a * gg:
            return _proposal(agent, prob, d, iterations=it)
        a *= backtrack.beta
    return _proposal(agent, prob, np.zeros_like(g), converged=False, iterations=it)


def select(
    portfolio: Portfolio,
    agent: AgentSpec,
    c: CostFunction,
    Y,
    basis: SecurityBasis | None = None,
    *,
    tol: float = 1e-10,
    max_iter: int = 500,
    max_step: float = 1e3,
    backtrack: BacktrackParams = BacktrackParams(),
) -> TradeProposal:
    if agent.mode == EXACT:
        return select_exact(portfolio, agent, c, Y, basis, tol, max_iter, max_step)
    return select_gradient_step(portfolio, agent, c, Y, basis, backtrack)
