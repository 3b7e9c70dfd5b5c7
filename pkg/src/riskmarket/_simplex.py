"""Brute-force suprema over the probability simplex.

Desk-scale oracle: a dense lattice on the simplex locates the basin, then
BFGS in softmax coordinates polishes the best lattice points and a handful
of random interior starts. Shared by the risk, pricing and duality oracles.
"""

from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.optimize import minimize
from scipy.special import softmax

MAX_STATES = 8
MAX_GRID_POINTS = 200_000


class OracleConvergenceError(RuntimeError):
    """The simplex search did not settle; carries the best value found."""

    def __init__(self, message, value, argmax):
        super().__init__(message)
        self.value = value
        self.argmax = argmax


@dataclass(frozen=True)
class SimplexSup:
    value: float
    argmax: np.ndarray
    converged: bool


def lattice_resolution(n: int, step: float = 0.01) -> int:
    """Number of lattice divisions: 1/step, coarsened to keep the grid tractable."""
    m = max(1, int(round(1.0 / step)))
    while m > 1 and math.comb(m + n - 1, n - 1) > MAX_GRID_POINTS:
        m -= 1
    return m


def simplex_lattice(n: int, m: int) -> np.ndarray:
    """All points of the simplex whose coordinates are multiples of 1/m."""
    if n == 1:
        return np.ones((1, 1))
    # stars and bars: bar positions among m + n - 1 slots
    bars = np.array(list(itertools.combinations(range(m + n - 1), n - 1)), dtype=np.int64)
    padded = np.hstack([np.full((len(bars), 1), -1), bars, np.full((len(bars), 1), m + n - 1)])
    counts = np.diff(padded, axis=1) - 1
    return counts / m


def _evaluate(penalty, Q: np.ndarray, batched: bool) -> np.ndarray:
    if batched:
        return np.asarray(penalty(Q), dtype=float).reshape(len(Q))
    return np.array([penalty(q) for q in Q], dtype=float)


def simplex_sup(
    linear: np.ndarray,
    penalty: Callable[[np.ndarray], float],
    *,
    batched: bool = False,
    tol: float = 1e-4,
    step: float = 0.01,
    n_polish: int = 3,
    n_random: int = 4,
    seed: int = 0,
    raise_on_failure: bool = True,
) -> SimplexSup:
    """``sup_Q <linear, Q> - penalty(Q)`` over the probability simplex."""
    c = np.asarray(linear, dtype=float)
    n = c.shape[0]
    if n > MAX_STATES:
        raise ValueError(f"simplex oracle is limited to {MAX_STATES} states, got {n}")

    grid = simplex_lattice(n, lattice_resolution(n, step))
    with np.errstate(divide="ignore", invalid="ignore"):
        vals = grid @ c - _evaluate(penalty, grid, batched)
    vals = np.where(np.isnan(vals), -np.inf, vals)
    order = np.argsort(vals)[::-1]
    best_i = int(order[0])
    best_val, best_q = float(vals[best_i]), grid[best_i]
    if n == 1:
        return SimplexSup(best_val, best_q, True)

    def neg_obj(z):
        q = softmax(z)
        with np.errstate(divide="ignore", invalid="ignore"):
            p = float(penalty(q[None, :])[0]) if batched else float(penalty(q))
        v = q @ c - p
        return -v if np.isfinite(v) else 1e300

    rng = np.random.default_rng(seed)
    starts = [grid[i] for i in order[:n_polish] if np.isfinite(vals[i])]
    starts += list(rng.dirichlet(np.ones(n), size=n_random))
    converged = False
    gtol = min(1e-9, tol * 1e-3)
    for q0 in starts:
        z0 = np.log(np.clip(q0, 1e-12, None))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            res = minimize(neg_obj, z0, method="BFGS", options={"gtol": gtol, "maxiter": 2000})
        # status 2 means BFGS hit the floating-point floor, which is a settled answer
        converged |= res.status in (0, 2)
        if -res.fun > best_val:
            best_val, best_q = float(-res.fun), softmax(res.x)
    if not converged and raise_on_failure:
        raise OracleConvergenceError(
            f"simplex search did not converge (best value {best_val:.6g})", best_val, best_q
        )
    return SimplexSup(best_val, best_q, converged)
