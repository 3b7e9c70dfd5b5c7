"""Outcome spaces, securities, portfolios and the asset algebra.

A market is built on a finite outcome space. Each security is a payoff
function over the states; a portfolio is cash plus a vector of shares, and
the risky asset it implies is the payoff vector ``shares @ payoff_matrix``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

RANK_RTOL = 1e-10


class DimensionError(ValueError):
    """Raised when share, payoff or belief vectors have the wrong length."""


def _as_vector(x, name="vector") -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1)
    if arr.ndim != 1:
        raise DimensionError(f"{name} must be one-dimensional, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} has non-finite entries")
    return arr


@dataclass(frozen=True)
class OutcomeSpace:
    states: tuple

    def __post_init__(self):
        states = tuple(self.states)
        if len(states) < 1:
            raise ValueError("outcome space needs at least one state")
        if len(set(states)) != len(states):
            raise ValueError("state labels must be unique")
        object.__setattr__(self, "states", states)

    @classmethod
    def of_size(cls, n: int) -> "OutcomeSpace":
        return cls(tuple(range(n)))

    def __len__(self) -> int:
        return len(self.states)

    def index(self, state) -> int:
        return self.states.index(state)


@dataclass(frozen=True, eq=False)
class SecurityBasis:
    """K securities over |Ω| states; row k holds the payoffs of security k.

    The matrix is copied and made read-only on construction. Linear
    independence is not enforced here (see :func:`verify_basis`), because the
    engine wants to reject degenerate bases with a clear message rather than
    at construction time.
    """

    payoff_matrix: np.ndarray
    outcomes: OutcomeSpace | None = field(default=None)

    def __post_init__(self):
        m = np.array(self.payoff_matrix, dtype=float)
        if m.ndim == 1:
            m = m.reshape(1, -1)
        if m.ndim != 2 or m.size == 0:
            raise DimensionError("payoff matrix must be a non-empty K x |Ω| array")
        if not np.all(np.isfinite(m)):
            raise ValueError("payoff matrix has non-finite entries")
        m.flags.writeable = False
        object.__setattr__(self, "payoff_matrix", m)
        if self.outcomes is None:
            object.__setattr__(self, "outcomes", OutcomeSpace.of_size(m.shape[1]))
        elif len(self.outcomes) != m.shape[1]:
            raise DimensionError(
                f"payoff matrix has {m.shape[1]} columns but outcome space has "
                f"{len(self.outcomes)} states"
            )

    @classmethod
    def arrow_debreu(cls, outcomes: OutcomeSpace | int) -> "SecurityBasis":
        """One security per state, paying 1 if that state occurs."""
        if isinstance(outcomes, int):
            outcomes = OutcomeSpace.of_size(outcomes)
        return cls(np.eye(len(outcomes)), outcomes)

    @property
    def n_securities(self) -> int:
        return self.payoff_matrix.shape[0]

    @property
    def n_states(self) -> int:
        return self.payoff_matrix.shape[1]

    def payoff(self, shares) -> np.ndarray:
        return asset_payoff(shares, self)

    def shares_from_payoff(self, payoff) -> np.ndarray:
        """Invert ``payoff = shares @ payoff_matrix`` by least squares."""
        x = _as_vector(payoff, "payoff")
        if x.shape[0] != self.n_states:
            raise DimensionError(f"payoff has length {x.shape[0]}, expected {self.n_states}")
        s, *_ = np.linalg.lstsq(self.payoff_matrix.T, x, rcond=None)
        return s


@dataclass(frozen=True)
class Portfolio:
    """Cash (the risk-free asset) and share holdings."""

    cash: float = 0.0
    shares: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        if not np.isfinite(self.cash):
            raise ValueError("cash must be finite")
        s = _as_vector(self.shares, "shares").copy()
        s.flags.writeable = False
        object.__setattr__(self, "cash", float(self.cash))
        object.__setattr__(self, "shares", s)

    @classmethod
    def empty(cls, n_securities: int, cash: float = 0.0) -> "Portfolio":
        return cls(cash, np.zeros(n_securities))

    def risky_payoff(self, basis: SecurityBasis) -> np.ndarray:
        return asset_payoff(self.shares, basis)

    def gross_payoff(self, basis: SecurityBasis) -> np.ndarray:
        return self.cash + asset_payoff(self.shares, basis)


def asset_payoff(shares: Sequence[float], basis: SecurityBasis) -> np.ndarray:
    """Payoff in every state of holding ``shares`` of the basis securities."""
    s = _as_vector(shares, "shares")
    if s.shape[0] != basis.n_securities:
        raise DimensionError(
            f"got {s.shape[0]} share entries for a basis of {basis.n_securities} securities"
        )
    return s @ basis.payoff_matrix


def verify_basis(basis: SecurityBasis | np.ndarray, rtol: float = RANK_RTOL) -> bool:
    """True iff the securities are linearly independent.

    Rank is counted as the number of singular values above ``rtol`` times the
    largest one. Never raises; malformed input is simply not a valid basis.
    """
    try:
        m = basis.payoff_matrix if isinstance(basis, SecurityBasis) else np.asarray(basis, float)
        if m.ndim != 2 or m.size == 0 or not np.all(np.isfinite(m)):
            return False
        k, n = m.shape
        if k > n:
            return False
        sv = np.linalg.svd(m, compute_uv=False)
    except (ValueError, TypeError, np.linalg.LinAlgError):
        return False
    if sv[0] == 0.0:
        return False
    return int(np.sum(sv > rtol * sv[0])) == k
