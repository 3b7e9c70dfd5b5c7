"""Ready-made markets for three learning problems, with reference solutions.

* opinion pooling: entropic agents against LMSR aggregate their beliefs into
  a logarithmic opinion pool slightly biased toward uniform;
* Gaussian MAP: one quadratic agent against a quadratic market maker finds
  the posterior mean of a Gaussian, in share space;
* l2-regularised logistic regression: the data loss is the market maker's
  cost and each agent pays a quadratic penalty on its own security, so the
  market runs coordinate descent (or gradient descent with a single agent).

Logistic loss uses the standard sign, ``log(1 + exp(-y w.x))``.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import expit

from .agent import EXACT, GRADIENT_STEP, AgentSpec, BacktrackParams
from .core import SecurityBasis
from .engine import Market
from .pricing import CostFunction, LMSRCost, QuadraticCost
from .risk import EntropicRisk, QuadraticRisk, check_belief

GAUSSIAN_PRIOR_MEAN = 0.0
GAUSSIAN_PRIOR_STD = 1.0


# -- opinion pooling --------------------------------------------------------


def coin_beliefs(n_agents: int, n_obs: int = 5, p_heads: float = 0.7, seed: int = 0) -> np.ndarray:
    """Posterior predictive beliefs of agents who each flip a biased coin ``n_obs`` times.

    Every agent starts from a uniform prior, so after ``h`` heads its belief
    is ``((1 + h) / (n_obs + 2), (1 + n_obs - h) / (n_obs + 2))``. Each agent
    draws from its own stream spawned from ``seed``.
    """
    streams = np.random.SeedSequence(seed).spawn(n_agents)
    heads = np.array([np.random.default_rng(s).binomial(n_obs, p_heads) for s in streams])
    return np.column_stack([1 + heads, 1 + n_obs - heads]) / (n_obs + 2)


def build_opinion_pool_market(beliefs, thetas=1.0, theta0: float = 1.0, **market_options) -> Market:
    """Arrow-Debreu securities, one entropic agent per belief, LMSR market maker."""
    P = np.atleast_2d(np.asarray(beliefs, dtype=float))
    if P.size == 0:
        raise ValueError("need at least one belief")
    for i, p in enumerate(P):
        check_belief(p, f"belief {i}")
        if np.any(p <= 0):
            raise ValueError(f"belief {i} must be strictly positive")
    thetas = np.broadcast_to(np.asarray(thetas, dtype=float), (P.shape[0],))
    K = P.shape[1]
    agents = [AgentSpec(i, EntropicRisk(th, p), EXACT) for i, (p, th) in enumerate(zip(P, thetas))]
    return Market(agents, LMSRCost(theta0, K), SecurityBasis.arrow_debreu(K), **market_options)


# -- Gaussian MAP -----------------------------------------------------------


def _check_gaussian(sigma1, theta1, theta0):
    for name, v in (("sigma1", sigma1), ("theta1", theta1), ("theta0", theta0)):
        if not v > 0:
            raise ValueError(f"{name} must be positive, got {v}")


def build_gaussian_map_market(mu1: float, sigma1: float, theta1: float, theta0: float) -> Market:
    """One security paying the outcome itself; a quadratic agent; quadratic cost.

    The agent's entropic risk under belief ``N(mu1, sigma1^2)`` is the
    quadratic ``-s mu1 + sigma1^2 theta1 s^2 / 2``. The prior is fixed at
    mean 0 and standard deviation 1.
    """
    _check_gaussian(sigma1, theta1, theta0)
    agent = AgentSpec(0, QuadraticRisk(mu1, sigma1**2 * theta1), EXACT)
    return Market([agent], QuadraticCost(theta0, 1), n_securities=1)


def gaussian_map_closed_form(mu1: float, sigma1: float, theta1: float, theta0: float):
    """Equilibrium holding ``s*`` and posterior mean ``mu_map = theta0 * s*``."""
    _check_gaussian(sigma1, theta1, theta0)
    v = sigma1**2 * theta1
    s_star = mu1 / (theta0 + v)
    # posterior mean with prior N(0, 1) weighted by 1/theta0 and likelihood weighted by 1/theta1
    prior_prec = 1.0 / (theta0 * GAUSSIAN_PRIOR_STD**2)
    like_prec = 1.0 / (theta1 * sigma1**2)
    mu_map = (prior_prec * GAUSSIAN_PRIOR_MEAN + like_prec * mu1) / (prior_prec + like_prec)
    return s_star, mu_map


# -- logistic regression ----------------------------------------------------


@dataclass(frozen=True, eq=False)
class Dataset:
    features: np.ndarray  # (M, K)
    labels: np.ndarray  # (M,) in {+1, -1}

    def __post_init__(self):
        X = np.array(self.features, dtype=float)
        y = np.array(self.labels, dtype=float).reshape(-1)
        if X.ndim == 1:
            X = X.reshape(-1, 1)
        if X.ndim != 2 or X.shape[0] < 1:
            raise ValueError("features must be an M x K matrix with M >= 1")
        if y.shape[0] != X.shape[0]:
            raise ValueError(f"{X.shape[0]} feature rows but {y.shape[0]} labels")
        if not np.all(np.isin(y, (-1.0, 1.0))):
            raise ValueError("labels must be +1 or -1")
        if not np.all(np.isfinite(X)):
            raise ValueError("features must be finite")
        X.flags.writeable = False
        y.flags.writeable = False
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "labels", y)

    @property
    def n_samples(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    @classmethod
    def synthetic(cls, m: int = 50, k: int = 3, seed: int = 0, true_weights=None) -> "Dataset":
        """Gaussian features; labels drawn from a logistic model with ``true_weights``."""
        rng = np.random.default_rng(seed)
        w = np.linspace(1.5, -1.5, k) if true_weights is None else np.asarray(true_weights, float)
        X = rng.normal(size=(m, k))
        y = np.where(rng.uniform(size=m) < expit(X @ w), 1.0, -1.0)
        return cls(X, y)

    @classmethod
    def from_csv(cls, path) -> "Dataset":
        """Columns ``x1..xK`` and ``y``; a header row is required."""
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            fields = reader.fieldnames or []
            if "y" not in fields:
                raise ValueError(f"{path}: missing 'y' column")
            xcols = [f for f in fields if f != "y"]
            if not xcols:
                raise ValueError(f"{path}: no feature columns")
            rows, labels = [], []
            for line, row in enumerate(reader, start=2):
                try:
                    rows.append([float(row[c]) for c in xcols])
                    labels.append(float(row["y"]))
                except (TypeError, ValueError) as exc:
                    raise ValueError(f"{path}:{line}: {exc}") from None
        return cls(np.array(rows), np.array(labels))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow([f"x{i + 1}" for i in range(self.n_features)] + ["y"])
            for x, y in zip(self.features, self.labels):
                w.writerow([repr(float(v)) for v in x] + [int(y)])


class LogisticLossCost(CostFunction):
    """Mean logistic loss of the weights ``w``, used as the market maker's potential."""

    def __init__(self, data: Dataset):
        self.data = data
        self.n_securities = data.n_features
        self._Z = data.labels[:, None] * data.features  # rows y_m x_m

    def cost(self, Y) -> float:
        w = self._check(Y)
        return float(np.mean(np.logaddexp(0.0, -(self._Z @ w))))

    def price(self, Y) -> np.ndarray:
        w = self._check(Y)
        return -(self._Z.T @ expit(-(self._Z @ w))) / self.data.n_samples

    def hessian(self, Y):
        w = self._check(Y)
        s = expit(self._Z @ w)
        return (self._Z.T * (s * (1 - s))) @ self._Z / self.data.n_samples


def logistic_objective(w, data: Dataset, lam: float) -> float:
    w = np.asarray(w, dtype=float)
    z = data.labels * (data.features @ w)
    return float(np.mean(np.logaddexp(0.0, -z)) + 0.5 * lam * (w @ w))


def build_logistic_market(
    data: Dataset,
    lam: float,
    mode: str = "coordinate",
    agent_mode: str = GRADIENT_STEP,
    backtrack: BacktrackParams = BacktrackParams(),
    **market_options,
) -> Market:
    """Logistic loss as the market maker's cost, l2 penalties as agents' risks.

    ``mode="coordinate"`` creates one agent per feature, each allowed to
    trade only its own security; ``mode="gradient"`` creates a single agent
    trading all of them.
    """
    if not lam > 0:
        raise ValueError(f"lambda must be positive, got {lam}")
    K = data.n_features
    risk = QuadraticRisk(0.0, lam)
    if mode == "coordinate":
        agents = [AgentSpec(k, risk, agent_mode, np.arange(K) == k) for k in range(K)]
    elif mode == "gradient":
        agents = [AgentSpec(0, risk, agent_mode)]
    else:
        raise ValueError(f"mode must be 'coordinate' or 'gradient', got {mode!r}")
    return Market(agents, LogisticLossCost(data), n_securities=K, backtrack=backtrack, **market_options)


def reference_logistic_solver(
    data: Dataset, lam: float, tol: float = 1e-10, max_iter: int = 100_000
) -> np.ndarray:
    """Full-batch gradient descent with Armijo backtracking on the regularised loss.

    Deliberately self-contained so it can serve as an independent check on
    the market.
    """
    X, y = data.features, data.labels
    M = X.shape[0]

    def f(w):
        return np.mean(np.logaddexp(0.0, -y * (X @ w))) + 0.5 * lam * (w @ w)

    def grad(w):
        r = expit(-y * (X @ w))
        return -(X.T @ (y * r)) / M + lam * w

    w = np.zeros(X.shape[1])
    fw = f(w)
    for _ in range(max_iter):
        g = grad(w)
        gg = g @ g
        if math.sqrt(gg) <= tol:
            return w
        step = 1.0
        while step > 1e-20:
            w_new = w - step * g
            f_new = f(w_new)
            if f_new <= fw - 0.5 * step * gg:
                break
            step *= 0.5
        else:
            break
        if np.array_equal(w_new, w):
            break  # step below float resolution of w
        w, fw = w_new, f_new
    if math.sqrt(grad(w) @ grad(w)) > max(tol, 1e-8):
        raise RuntimeError("reference logistic solver did not converge")
    return w


def logistic_grid_search(data: Dataset, lam: float, lo: float, hi: float, n: int = 200_001) -> float:
    """Brute-force minimiser for one-feature problems on a dense grid."""
    if data.n_features != 1:
        raise ValueError("grid search is for one-feature datasets")
    grid = np.linspace(lo, hi, n)
    z = data.labels[:, None] * data.features[:, 0][:, None] * grid[None, :]
    vals = np.mean(np.logaddexp(0.0, -z), axis=0) + 0.5 * lam * grid**2
    return float(grid[np.argmin(vals)])


def load_beliefs(path) -> np.ndarray:
    """Beliefs stored as a JSON array of probability vectors."""
    with open(Path(path)) as fh:
        beliefs = np.asarray(json.load(fh), dtype=float)
    if beliefs.ndim != 2:
        raise ValueError(f"{path}: expected a JSON array of probability vectors")
    for i, p in enumerate(beliefs):
        check_belief(p, f"{path}: belief {i}")
    return beliefs


__all__ = [
    "Dataset",
    "LogisticLossCost",
    "build_gaussian_map_market",
    "build_logistic_market",
    "build_opinion_pool_market",
    "coin_beliefs",
    "gaussian_map_closed_form",
    "load_beliefs",
    "logistic_grid_search",
    "logistic_objective",
    "reference_logistic_solver",
]
