"""Primal problems behind a market and the checks that tie the two together.

For convex risk measures with penalties ``F_n`` and a cost function that is
the conjugate of ``F_0``, the market objective ``L`` is the Fenchel dual of

    min_P  F_0(P) + sum_n F_n(P)

so ``-L`` lower-bounds every primal value, with equality at the optimum for
the smooth families built in here. The market's estimate of the primal
minimiser is its final instantaneous price.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import minimize
from scipy.special import rel_entr, softmax, xlogy

from ._simplex import simplex_sup
from .agent import AgentSpec
from .core import SecurityBasis, _as_vector
from .pricing import CostFunction, LMSRCost, QuadraticCost
from .risk import EntropicRisk, QuadraticRisk, check_belief

SIMPLEX = "simplex"
REAL = "real"


class UnsupportedFamilyError(TypeError):
    """No closed-form primal for this combination of risk measures and cost."""


@dataclass(eq=False)
class PrimalProblem:
    """``min_P sum_n F_n(P)`` over the simplex or over ``R^dim``.

    ``functionals[0]`` is the market maker's term.
    """

    functionals: list[Callable[[np.ndarray], float]]
    domain: str
    dim: int
    names: list[str] = field(default_factory=list)

    def __post_init__(self):
        if self.domain not in (SIMPLEX, REAL):
            raise ValueError(f"domain must be {SIMPLEX!r} or {REAL!r}")

    def value(self, P) -> float:
        P = _as_vector(P, "P")
        if P.shape[0] != self.dim:
            raise ValueError(f"primal point has {P.shape[0]} entries, expected {self.dim}")
        return float(sum(F(P) for F in self.functionals))

    __call__ = value

    def solve(self, tol: float = 1e-12) -> tuple[np.ndarray, float]:
        """Numerical minimiser, by BFGS (in softmax coordinates on the simplex)."""
        if self.domain == SIMPLEX:
            res = minimize(lambda z: self.value(softmax(z)), np.zeros(self.dim), method="BFGS",
                           options={"gtol": tol})
            P = softmax(res.x)
        else:
            res = minimize(self.value, np.zeros(self.dim), method="BFGS", options={"gtol": tol})
            P = res.x
        return P, self.value(P)


def fenchel_transform_oracle(
    F: Callable[[np.ndarray], float],
    x,
    domain: str = SIMPLEX,
    *,
    grid: np.ndarray | None = None,
    batched: bool = False,
    tol: float = 1e-6,
    n_starts: int = 8,
    scale: float = 10.0,
    seed: int = 0,
) -> float:
    """``sup_P <x, P> - F(P)`` over the simplex or over ``R^len(x)``.

    On the simplex this is the lattice-plus-polish search. On ``R^d`` it runs
    BFGS from the origin, from ``n_starts`` random points of spread
    ``scale`` and from the best points of ``grid`` if one is given.
    """
    x = _as_vector(x, "x")
    if domain == SIMPLEX:
        return simplex_sup(x, F, batched=batched, tol=tol, seed=seed).value
    if domain != REAL:
        raise ValueError(f"unknown domain {domain!r}")

    def neg(p):
        v = p @ x - F(p)
        return -v if np.isfinite(v) else 1e300

    rng = np.random.default_rng(seed)
    starts = [np.zeros_like(x)] + list(rng.normal(scale=scale, size=(n_starts, x.shape[0])))
    best = -np.inf
    if grid is not None:
        g = np.asarray(grid, dtype=float).reshape(len(grid), -1)
        vals = np.array([-neg(p) for p in g])
        best = float(vals.max())
        starts += [g[i] for i in np.argsort(vals)[::-1][:3]]
    converged = False
    for p0 in starts:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            res = minimize(neg, p0, method="BFGS", options={"gtol": tol * 1e-3, "maxiter": 5000})
        converged |= res.status in (0, 2)
        best = max(best, float(-res.fun))
    if not converged:
        raise RuntimeError(f"Fenchel oracle did not converge (best value {best:.6g})")
    return best


def entropy_term(theta0: float) -> Callable[[np.ndarray], float]:
    """``(1/theta0) sum P log P``: the exact conjugate of LMSR with parameter theta0."""
    return lambda P: float(np.sum(xlogy(P, P), axis=-1) / theta0)


def kl_term(belief, theta: float) -> Callable[[np.ndarray], float]:
    p = check_belief(belief)
    return lambda P: float(np.sum(rel_entr(P, p), axis=-1) / theta)


def _is_arrow_debreu(basis: SecurityBasis | None) -> bool:
    m = basis.payoff_matrix if basis is not None else None
    return m is not None and m.shape[0] == m.shape[1] and np.array_equal(m, np.eye(m.shape[0]))


def dual_objective_from_market(
    agents: Sequence[AgentSpec],
    c: CostFunction,
    basis: SecurityBasis | None = None,
    n_securities: int | None = None,
) -> PrimalProblem:
    """The primal problem whose Fenchel dual is the market's objective.

    Supported families: LMSR with entropic agents over Arrow-Debreu
    securities (a weighted KL sum on the simplex), and quadratic cost with
    quadratic agents (a sum of quadratics on ``R^K``, i.e. a Gaussian MAP
    problem). The market maker's term is the exact conjugate of ``c``, so for
    LMSR it is ``(1/theta0) KL(P || uniform)`` shifted by ``-log(K)/theta0``.
    """
    agents = list(agents)
    if isinstance(c, LMSRCost):
        if basis is None:
            K = n_securities or c.n_securities
            if K is None:
                raise ValueError("cannot tell the number of states without a basis")
        elif not _is_arrow_debreu(basis):
            raise UnsupportedFamilyError("LMSR primal needs Arrow-Debreu securities")
        else:
            K = basis.n_states
        terms, names = [entropy_term(c.theta0)], ["market_maker"]
        for a in agents:
            if not isinstance(a.risk, EntropicRisk):
                raise UnsupportedFamilyError(
                    f"agent {a.id}: LMSR primal needs entropic agents, got {type(a.risk).__name__}"
                )
            if a.tradable_mask is not None and not a.tradable_mask.all():
                raise UnsupportedFamilyError(f"agent {a.id}: masked entropic agents not supported")
            terms.append(kl_term(a.risk.belief, a.risk.theta))
            names.append(f"agent_{a.id}")
        return PrimalProblem(terms, SIMPLEX, K, names)

    if isinstance(c, QuadraticCost):
        K = basis.n_securities if basis is not None else (n_securities or c.n_securities or 1)
        theta0 = c.theta0
        terms = [lambda mu: float(mu @ mu) / (2 * theta0)]
        names = ["market_maker"]
        for a in agents:
            r = a.risk
            if not isinstance(r, QuadraticRisk) or r.scale <= 0:
                raise UnsupportedFamilyError(
                    f"agent {a.id}: quadratic primal needs quadratic agents with positive scale"
                )
            mask = a.mask_for(K)
            target = np.broadcast_to(r.mu, (K,)).copy()

            def term(mu, target=target, mask=mask, scale=r.scale):
                d = (mu - target)[mask]
                return float(d @ d) / (2 * scale)

            terms.append(term)
            names.append(f"agent_{a.id}")
        return PrimalProblem(terms, REAL, K, names)

    raise UnsupportedFamilyError(f"no closed-form primal for cost {type(c).__name__}")


def analytic_log_pool(beliefs, thetas, theta0: float) -> np.ndarray:
    """Minimiser of the LMSR/entropic primal: a geometric pool biased toward uniform.

    Agent ``n`` carries weight ``1/theta_n``; the uniform market-maker belief
    carries ``1/theta0``. ``theta0=np.inf`` gives the unbiased pool.
    """
    P = np.atleast_2d(np.asarray(beliefs, dtype=float))
    if P.ndim != 2:
        raise ValueError("beliefs must be a list of probability vectors")
    for p in P:
        check_belief(p)
    if np.any(P <= 0):
        raise ValueError("log pool needs strictly positive beliefs")
    w = 1.0 / np.broadcast_to(np.asarray(thetas, dtype=float), (P.shape[0],))
    if np.any(w <= 0):
        raise ValueError("thetas must be positive")
    w0 = 0.0 if np.isinf(theta0) else 1.0 / theta0
    total = w0 + w.sum()
    K = P.shape[1]
    logp = (w @ np.log(P)) / total + (w0 / total) * np.log(1.0 / K)
    logp -= logp.max()
    out = np.exp(logp)
    return out / out.sum()


def weak_duality_check(market_L: float, primal: PrimalProblem, P_candidate) -> float:
    """``sum_n F_n(P) - (-L)``; non-negative up to rounding for any feasible ``P``."""
    return primal.value(P_candidate) + market_L


def recover_primal(c: CostFunction, Y) -> np.ndarray:
    """The market's primal estimate: the instantaneous price at inventory ``Y``."""
    return c.price(Y)
