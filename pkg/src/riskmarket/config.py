"""Market configuration files (JSON) and the built-in presets.

A config describes the outcome space, the securities, the agents, the
market maker, the trading queue and the stop rule. Validation errors name
the offending field, e.g. ``agents.3.risk.entropic.theta``.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Annotated, Literal, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, PositiveFloat, PositiveInt, ValidationError

from .agent import AgentSpec, BacktrackParams
from .apps import Dataset, LogisticLossCost, coin_beliefs
from .core import OutcomeSpace, SecurityBasis
from .engine import Market, QueuePolicy, StopRule
from .pricing import LMSRCost, QuadraticCost
from .risk import EntropicRisk, QuadraticRisk, VaRRisk


class ConfigError(ValueError):
    pass


class _Model(BaseModel):
    model_config = ConfigDict(extra="forbid")


class EntropicSpec(_Model):
    family: Literal["entropic"]
    theta: PositiveFloat
    belief: list[float]


class VaRSpec(_Model):
    family: Literal["var"]
    alpha: float = Field(gt=0, lt=1)
    belief: list[float]


class QuadraticSpec(_Model):
    family: Literal["quadratic"]
    mu: float | list[float] = 0.0
    scale: float = Field(default=1.0, ge=0)


RiskSpec = Annotated[Union[EntropicSpec, VaRSpec, QuadraticSpec], Field(discriminator="family")]


class AgentConfig(_Model):
    risk: RiskSpec
    mode: Literal["exact", "gradient_step"] = "exact"
    mask: list[bool] | None = None
    cash: float = 0.0
    id: int | None = None


class MatrixBasis(_Model):
    matrix: list[list[float]]


class SyntheticData(_Model):
    m: PositiveInt = 50
    k: PositiveInt = 3
    seed: int = 0
    true_weights: list[float] | None = None


class LMSRSpec(_Model):
    family: Literal["lmsr"]
    theta0: PositiveFloat


class QuadraticCostSpec(_Model):
    family: Literal["quadratic"]
    theta0: PositiveFloat


class LogisticSpec(_Model):
    family: Literal["logistic"]
    data: str | None = None  # CSV path, relative to the config file
    synthetic: SyntheticData | None = None


CostSpec = Annotated[Union[LMSRSpec, QuadraticCostSpec, LogisticSpec], Field(discriminator="family")]


class QueueConfig(_Model):
    policy: Literal["round_robin", "random", "greedy"] = "round_robin"
    seed: int | None = None  # defaults to the root seed


class StopConfig(_Model):
    max_rounds: PositiveInt | None = None
    eps: PositiveFloat = 1e-8
    window: PositiveInt | None = None


class SolverConfig(_Model):
    tol: PositiveFloat = 1e-10
    max_iter: PositiveInt = 500
    max_step: PositiveFloat = 1e3
    a0: PositiveFloat = 1.0
    beta: float = Field(default=0.5, gt=0, lt=1)
    sigma: float = Field(default=1e-4, ge=0, lt=1)
    a_min: PositiveFloat = 1e-12


class MarketConfig(_Model):
    name: str = "market"
    outcomes: list[Union[int, str]] | None = None
    basis: Union[Literal["arrow_debreu", "linear"], MatrixBasis] = "arrow_debreu"
    n_securities: PositiveInt | None = None  # required for a "linear" basis without cost hints
    agents: list[AgentConfig] = Field(min_length=1)
    cost: CostSpec
    queue: QueueConfig = QueueConfig()
    stop: StopConfig = StopConfig()
    solver: SolverConfig = SolverConfig()
    seed: int = 0


def _format_validation_error(exc: ValidationError) -> str:
    lines = []
    for err in exc.errors():
        loc = ".".join(str(p) for p in err["loc"]) or "<root>"
        lines.append(f"{loc}: {err['msg']}")
    return "; ".join(lines)


def parse_config(data: dict) -> MarketConfig:
    try:
        return MarketConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(_format_validation_error(exc)) from None


def load_config(path) -> tuple[MarketConfig, Path]:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
    return parse_config(data), path.parent


def _risk(spec, where: str):
    try:
        if isinstance(spec, EntropicSpec):
            return EntropicRisk(spec.theta, spec.belief)
        if isinstance(spec, VaRSpec):
            return VaRRisk(spec.alpha, spec.belief)
        return QuadraticRisk(np.asarray(spec.mu, dtype=float), spec.scale)
    except ValueError as exc:
        raise ConfigError(f"{where}: {exc}") from None


def build_market(cfg: MarketConfig, base_dir: Path | str = ".") -> Market:
    """Turn a validated config into a :class:`Market`; raises ConfigError on invariant violations."""
    base_dir = Path(base_dir)
    cost_spec = cfg.cost
    if isinstance(cost_spec, LogisticSpec):
        if (cost_spec.data is None) == (cost_spec.synthetic is None):
            raise ConfigError("cost: logistic cost needs exactly one of 'data' or 'synthetic'")
        try:
            if cost_spec.data is not None:
                data = Dataset.from_csv(base_dir / cost_spec.data)
            else:
                s = cost_spec.synthetic
                data = Dataset.synthetic(s.m, s.k, s.seed, s.true_weights)
        except (OSError, ValueError) as exc:
            raise ConfigError(f"cost.data: {exc}") from None
        cost = LogisticLossCost(data)
    elif isinstance(cost_spec, LMSRSpec):
        cost = LMSRCost(cost_spec.theta0)
    else:
        cost = QuadraticCost(cost_spec.theta0)

    basis = None
    n_securities = cfg.n_securities
    if cfg.basis == "linear":
        if n_securities is None:
            n_securities = cost.n_securities
        if n_securities is None:
            raise ConfigError("n_securities: required for a 'linear' basis")
    else:
        try:
            if isinstance(cfg.basis, MatrixBasis):
                outcomes = OutcomeSpace(tuple(cfg.outcomes)) if cfg.outcomes else None
                basis = SecurityBasis(np.array(cfg.basis.matrix, dtype=float), outcomes)
            else:
                if cfg.outcomes:
                    outcomes = OutcomeSpace(tuple(cfg.outcomes))
                else:
                    beliefs = [a.risk.belief for a in cfg.agents if hasattr(a.risk, "belief")]
                    if not beliefs:
                        raise ConfigError("outcomes: needed to size an Arrow-Debreu basis")
                    outcomes = OutcomeSpace.of_size(len(beliefs[0]))
                basis = SecurityBasis.arrow_debreu(outcomes)
        except ValueError as exc:
            raise ConfigError(f"basis: {exc}") from None

    agents = []
    for i, a in enumerate(cfg.agents):
        where = f"agents.{i}"
        try:
            agents.append(
                AgentSpec(
                    a.id if a.id is not None else i,
                    _risk(a.risk, f"{where}.risk"),
                    a.mode,
                    np.array(a.mask, dtype=bool) if a.mask is not None else None,
                    a.cash,
                )
            )
        except ValueError as exc:
            raise ConfigError(f"{where}: {exc}") from None

    s = cfg.solver
    try:
        return Market(
            agents, cost, basis, n_securities,
            tol=s.tol, max_iter=s.max_iter, max_step=s.max_step,
            backtrack=BacktrackParams(s.a0, s.beta, s.sigma, s.a_min),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def queue_policy(cfg: MarketConfig) -> QueuePolicy:
    seed = cfg.queue.seed if cfg.queue.seed is not None else cfg.seed
    return QueuePolicy(cfg.queue.policy, seed)


def stop_rule(cfg: MarketConfig) -> StopRule:
    return StopRule(cfg.stop.max_rounds, cfg.stop.eps, cfg.stop.window)


# -- presets -----------------------------------------------------------------

POOL_THETA = 1.0
POOL_THETA0 = 1.0
POOL_OBSERVATIONS = 5
POOL_P_HEADS = 0.7


def _opinion_pool(name: str, n_agents: int, seed: int, max_rounds: int | None, policy: str) -> dict:
    beliefs = coin_beliefs(n_agents, POOL_OBSERVATIONS, POOL_P_HEADS, seed)
    return {
        "name": name,
        "outcomes": ["heads", "tails"],
        "basis": "arrow_debreu",
        "agents": [
            {"risk": {"family": "entropic", "theta": POOL_THETA, "belief": [float(p) for p in b]}}
            for b in beliefs
        ],
        "cost": {"family": "lmsr", "theta0": POOL_THETA0},
        "queue": {"policy": policy},
        "stop": {"max_rounds": max_rounds, "eps": 1e-8},
        "seed": seed,
    }


def _logistic(name: str, mode: str, seed: int) -> dict:
    lam, K = 0.1, 3
    risk = {"family": "quadratic", "mu": 0.0, "scale": lam}
    if mode == "coordinate":
        agents = [
            {"risk": risk, "mode": "gradient_step", "mask": [j == k for j in range(K)]}
            for k in range(K)
        ]
    else:
        agents = [{"risk": risk, "mode": "gradient_step"}]
    return {
        "name": name,
        "basis": "linear",
        "n_securities": K,
        "agents": agents,
        "cost": {"family": "logistic", "synthetic": {"m": 50, "k": K, "seed": seed}},
        "stop": {"eps": 1e-8},
        "seed": seed,
    }


def _gaussian(seed: int) -> dict:
    mu1, sigma1, theta1, theta0 = 1.0, 1.0, 1.0, 1.0
    return {
        "name": "gaussian_map",
        "basis": "linear",
        "n_securities": 1,
        "agents": [{"risk": {"family": "quadratic", "mu": mu1, "scale": sigma1**2 * theta1}}],
        "cost": {"family": "quadratic", "theta0": theta0},
        "seed": seed,
    }


PRESETS = {
    "opinion_pool_fig1": lambda seed: _opinion_pool("opinion_pool_fig1", 10, seed, None, "round_robin"),
    "opinion_pool_fig2": lambda seed: _opinion_pool("opinion_pool_fig2", 100, seed, 500, "round_robin"),
    "gaussian_map": _gaussian,
    "logistic_cd": lambda seed: _logistic("logistic_cd", "coordinate", seed),
    "logistic_gd": lambda seed: _logistic("logistic_gd", "gradient", seed),
}


def presets() -> list[str]:
    return list(PRESETS)


def preset_config(name: str, seed: int = 0) -> MarketConfig:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")
    return parse_config(PRESETS[name](seed))
