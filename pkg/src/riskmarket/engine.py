"""The multi-period market loop and the global objective it minimises.

Each round one agent trades with the market maker. Because pricing is path
independent and risk measures are translation invariant, every trade an
agent accepts lowers

    L = c(Y) + sum_n rho_n(X_n),    Y = sum_n X_n

by exactly the amount it lowers the agent's own gross risk, so the trading
loop is a block-coordinate descent on ``L``. The engine tracks ``L`` after
every trade.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace
from typing import Callable, Sequence

import numpy as np

from .agent import AgentSpec, BacktrackParams, TradeProposal, select
from .core import DimensionError, Portfolio, SecurityBasis, verify_basis
from .pricing import CostFunction

logger = logging.getLogger(__name__)

ROUND_ROBIN = "round_robin"
RANDOM = "random"
GREEDY = "greedy"
POLICIES = (ROUND_ROBIN, RANDOM, GREEDY)


class StaleProposalError(RuntimeError):
    """A proposal was priced against an inventory that has since changed."""


@dataclass(frozen=True)
class QueuePolicy:
    """Which agent trades each round.

    ``round_robin`` cycles through agents in order, ``random`` draws one
    uniformly from a seeded stream, ``greedy`` evaluates every agent and
    lets the one with the largest risk reduction trade.
    """

    kind: str = ROUND_ROBIN
    seed: int | None = 0

    def __post_init__(self):
        if self.kind not in POLICIES:
            raise ValueError(f"queue policy must be one of {POLICIES}, got {self.kind!r}")


@dataclass(frozen=True)
class StopRule:
    max_rounds: int | None = None  # default 1000 * N
    eps: float = 1e-8
    window: int | None = None  # default N

    def resolve(self, n_agents: int) -> tuple[int, float, int]:
        max_rounds = self.max_rounds if self.max_rounds is not None else 10 * n_agents * 100
        window = self.window if self.window is not None else n_agents
        if max_rounds < 1:
            raise ValueError("max_rounds must be at least 1")
        if window < 1:
            raise ValueError("window must be at least 1")
        return max_rounds, self.eps, window


@dataclass(frozen=True, eq=False)
class MarketState:
    t: int
    holdings: np.ndarray  # (N, K) shares per agent
    cash: np.ndarray  # (N,)
    agent_risks: np.ndarray  # (N,) rho_n of each agent's risky asset
    objective: float
    converged: bool = False

    @property
    def inventory(self) -> np.ndarray:
        return self.holdings.sum(axis=0)

    @property
    def portfolios(self) -> list[Portfolio]:
        return [Portfolio(w, s) for w, s in zip(self.cash, self.holdings)]

    def portfolio(self, n: int) -> Portfolio:
        return Portfolio(self.cash[n], self.holdings[n])


@dataclass(frozen=True, eq=False)
class TradeRecord:
    t: int
    agent_id: int
    delta_shares: np.ndarray
    cost_paid: float
    objective_before: float
    objective_after: float
    price_after: np.ndarray
    agent_risk_before: float = 0.0
    agent_risk_after: float = 0.0
    solver_converged: bool = True
    clipped: bool = False
    error: str | None = None


def _frozen(a):
    a = np.array(a, dtype=float)
    a.flags.writeable = False
    return a


class Market:
    """Agents, a market maker and (optionally) the security basis they trade."""

    def __init__(
        self,
        agents: Sequence[AgentSpec],
        cost: CostFunction,
        basis: SecurityBasis | None = None,
        n_securities: int | None = None,
        *,
        tol: float = 1e-10,
        max_iter: int = 500,
        max_step: float = 1e3,
        backtrack: BacktrackParams = BacktrackParams(),
    ):
        self.agents = list(agents)
        self.cost = cost
        self.basis = basis
        self.solver_options = dict(tol=tol, max_iter=max_iter, max_step=max_step, backtrack=backtrack)
        if basis is not None:
            if not verify_basis(basis):
                raise ValueError("security payoffs are not linearly independent")
            k = basis.n_securities
            if n_securities is not None and n_securities != k:
                raise DimensionError(f"n_securities={n_securities} but basis has {k} securities")
        else:
            k = n_securities if n_securities is not None else cost.n_securities
        if k is None:
            raise ValueError("number of securities is unknown; pass a basis or n_securities")
        self.n_securities = int(k)
        self._validate()

    def _validate(self):
        if not self.agents:
            raise ValueError("a market needs at least one agent")
        ids = [a.id for a in self.agents]
        if len(set(ids)) != len(ids):
            raise ValueError(f"agent ids must be unique, got {ids}")
        for a in self.agents:
            a.mask_for(self.n_securities)
            if a.risk.domain == "payoff":
                if self.basis is None:
                    raise ValueError(f"agent {a.id}: {type(a.risk).__name__} needs a security basis")
                belief = getattr(a.risk, "belief", None)
                if belief is not None and belief.shape[0] != self.basis.n_states:
                    raise DimensionError(
                        f"agent {a.id}: belief has {belief.shape[0]} states, "
                        f"basis has {self.basis.n_states}"
                    )

    @property
    def n_agents(self) -> int:
        return len(self.agents)

    def agent_risk(self, n: int, shares) -> float:
        return self.agents[n].risk.share_risk(shares, self.basis)

    def initial_state(self) -> MarketState:
        N, K = self.n_agents, self.n_securities
        holdings = np.zeros((N, K))
        risks = np.array([self.agent_risk(n, holdings[n]) for n in range(N)])
        cash = np.array([a.cash for a in self.agents], dtype=float)
        objective = self.cost.cost(np.zeros(K)) + math.fsum(risks)
        return MarketState(0, _frozen(holdings), _frozen(cash), _frozen(risks), objective)

    def propose(self, state: MarketState, n: int) -> TradeProposal:
        return select(
            state.portfolio(n), self.agents[n], self.cost, state.inventory, self.basis,
            **self.solver_options,
        )

    def apply_trade(self, state: MarketState, proposal: TradeProposal, n: int) -> MarketState:
        """Move shares and cash of agent ``n`` only; every other portfolio is untouched."""
        return apply_trade(state, proposal, n, self)

    def global_objective(self, state: MarketState) -> float:
        return global_objective(state, self.agents, self.cost, self.basis)

    def run(
        self,
        schedule: QueuePolicy = QueuePolicy(),
        stop: StopRule = StopRule(),
        collect_all: bool = False,
        callback: Callable[[TradeRecord, MarketState], None] | None = None,
    ) -> "MarketRun":
        """Run rounds until the stop rule fires.

        Proposals are pure functions of the round-start state, so computing
        only the scheduled agent's proposal gives the same trace as
        collecting all of them; ``collect_all=True`` does the latter anyway.
        """
        max_rounds, eps, window = stop.resolve(self.n_agents)
        rng = np.random.default_rng(schedule.seed)
        state = self.initial_state()
        records: list[TradeRecord] = []
        for t in range(1, max_rounds + 1):
            proposals: dict[int, TradeProposal] = {}
            if schedule.kind == GREEDY or collect_all:
                for n in range(self.n_agents):
                    try:
                        proposals[n] = self.propose(state, n)
                    except (ArithmeticError, ValueError, np.linalg.LinAlgError) as exc:
                        logger.warning("round %d: agent %d failed to propose: %s", t, n, exc)
            if schedule.kind == ROUND_ROBIN:
                n = (t - 1) % self.n_agents
            elif schedule.kind == RANDOM:
                n = int(rng.integers(self.n_agents))
            else:
                n = min(proposals, key=lambda i: (proposals[i].risk_change, i)) if proposals else 0
            error = None
            proposal = proposals.get(n)
            if proposal is None:
                try:
                    proposal = self.propose(state, n)
                except (ArithmeticError, ValueError, np.linalg.LinAlgError) as exc:
                    error = f"{type(exc).__name__}: {exc}"
                    logger.warning("round %d: agent %d failed to propose: %s", t, n, exc)
            before = state
            if proposal is None:
                state = replace(state, t=t)
                delta = np.zeros(self.n_securities)
                cost_paid = 0.0
            else:
                state = self.apply_trade(state, proposal, n)
                delta, cost_paid = proposal.delta_shares, proposal.cost
            rec = TradeRecord(
                t=t,
                agent_id=self.agents[n].id,
                delta_shares=delta,
                cost_paid=cost_paid,
                objective_before=before.objective,
                objective_after=state.objective,
                price_after=_frozen(self.cost.price(state.inventory)),
                agent_risk_before=float(before.agent_risks[n]),
                agent_risk_after=float(state.agent_risks[n]),
                solver_converged=proposal.converged if proposal is not None else False,
                clipped=proposal.clipped if proposal is not None else False,
                error=error,
            )
            records.append(rec)
            if callback is not None:
                callback(rec, state)
            if check_convergence(records, eps, window):
                state = replace(state, converged=True)
                break
        return MarketRun(self, records, state)


@dataclass(eq=False)
class MarketRun:
    market: Market
    records: list[TradeRecord]
    state: MarketState

    @property
    def converged(self) -> bool:
        return self.state.converged

    @property
    def rounds(self) -> int:
        return self.state.t

    @property
    def final_price(self) -> np.ndarray:
        return self.market.cost.price(self.state.inventory)

    def objectives(self) -> np.ndarray:
        return np.array([r.objective_after for r in self.records])

    def prices(self) -> np.ndarray:
        return np.array([r.price_after for r in self.records])

    def deltas(self) -> np.ndarray:
        return np.array([r.delta_shares for r in self.records])

    def running_mean_price(self) -> np.ndarray:
        p = self.prices()
        return np.cumsum(p, axis=0) / np.arange(1, len(p) + 1)[:, None]


def apply_trade(state: MarketState, proposal: TradeProposal, n: int, market: Market) -> MarketState:
    """Settle a proposal for agent index ``n``: shares in, cash out."""
    Y = state.inventory
    if not np.array_equal(proposal.inventory, Y):
        raise StaleProposalError(
            f"proposal from agent {proposal.agent_id} was priced against a different inventory"
        )
    if proposal.is_zero:
        return replace(state, t=state.t + 1)
    holdings = np.array(state.holdings)
    holdings[n] += proposal.delta_shares
    cash = np.array(state.cash)
    cash[n] -= proposal.cost
    risks = np.array(state.agent_risks)
    risks[n] = market.agent_risk(n, holdings[n])
    objective = market.cost.cost(holdings.sum(axis=0)) + math.fsum(risks)
    return MarketState(state.t + 1, _frozen(holdings), _frozen(cash), _frozen(risks), objective)


def global_objective(
    state: MarketState,
    agents: Sequence[AgentSpec],
    c: CostFunction,
    basis: SecurityBasis | None = None,
) -> float:
    """``c(Y) + sum_n rho_n(X_n)`` recomputed from the holdings."""
    risks = [a.risk.share_risk(s, basis) for a, s in zip(agents, state.holdings)]
    return c.cost(state.inventory) + math.fsum(risks)


def check_convergence(trace: Sequence[TradeRecord] | np.ndarray, eps: float, window: int) -> bool:
    """True iff each of the last ``window`` trades moved every share by less than ``eps``."""
    if len(trace) < window or window < 1:
        return False
    recent = trace[-window:]
    if isinstance(recent, np.ndarray):
        deltas = recent
    else:
        deltas = np.array([r.delta_shares for r in recent])
    return bool(np.max(np.abs(deltas)) < eps)


def run_market(
    agents: Sequence[AgentSpec],
    c: CostFunction,
    basis: SecurityBasis | None = None,
    schedule: QueuePolicy = QueuePolicy(),
    stop: StopRule = StopRule(),
    n_securities: int | None = None,
    **solver_options,
) -> MarketRun:
    return Market(agents, c, basis, n_securities, **solver_options).run(schedule, stop)
