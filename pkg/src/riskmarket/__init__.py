"""Multi-period prediction markets with risk-measure agents and cost-function market makers."""

from .agent import AgentSpec, BacktrackParams, TradeProposal, select_exact, select_gradient_step
from .apps import (
    Dataset,
    build_gaussian_map_market,
    build_logistic_market,
    build_opinion_pool_market,
    gaussian_map_closed_form,
    reference_logistic_solver,
)
from .core import OutcomeSpace, Portfolio, SecurityBasis, asset_payoff, verify_basis
from .duality import (
    PrimalProblem,
    analytic_log_pool,
    dual_objective_from_market,
    fenchel_transform_oracle,
    weak_duality_check,
)
from .engine import (
    Market,
    MarketRun,
    MarketState,
    QueuePolicy,
    StopRule,
    TradeRecord,
    apply_trade,
    check_convergence,
    global_objective,
    run_market,
)
from .estimators import GaussianMAPMarket, LogOpinionPool, MarketLogisticRegression
from .pricing import CostFunction, FunctionCost, LMSRCost, QuadraticCost, incremental_cost
from .risk import (
    EntropicRisk,
    PenaltyFunctional,
    PenaltyRisk,
    QuadraticRisk,
    RiskMeasure,
    VaRRisk,
    gross_risk,
    kl_penalty,
    penalty_risk_oracle,
)

__version__ = "0.1.0"
