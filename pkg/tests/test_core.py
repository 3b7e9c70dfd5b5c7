import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from riskmarket.core import (
    DimensionError,
    OutcomeSpace,
    Portfolio,
    SecurityBasis,
    asset_payoff,
    verify_basis,
)

finite = st.floats(-100, 100, allow_nan=False)


def per_state_sum(shares, matrix):
    """Oracle: payoff built state by state, security by security."""
    k, n = len(matrix), len(matrix[0])
    return [sum(shares[i] * matrix[i][w] for i in range(k)) for w in range(n)]


def test_outcome_space_rejects_duplicates_and_empty():
    with pytest.raises(ValueError):
        OutcomeSpace(("a", "a"))
    with pytest.raises(ValueError):
        OutcomeSpace(())
    assert len(OutcomeSpace(("up", "down"))) == 2


def test_zero_shares_pay_nothing():
    basis = SecurityBasis(np.array([[1.0, 2.0, 3.0], [0.0, 1.0, -1.0]]))
    np.testing.assert_array_equal(asset_payoff([0, 0], basis), np.zeros(3))


def test_arrow_debreu_pays_in_its_state():
    basis = SecurityBasis.arrow_debreu(4)
    np.testing.assert_array_equal(asset_payoff([2, 0, 0, 0], basis), [2, 0, 0, 0])


def test_complex_securities_payoff():
    matrix = [[1.0, 1.0], [1.0, -1.0]]
    x = asset_payoff([1.0, 0.5], SecurityBasis(np.array(matrix)))
    np.testing.assert_allclose(x, per_state_sum([1.0, 0.5], matrix), rtol=0, atol=1e-15)
    np.testing.assert_allclose(x, [1.5, 0.5])


def test_dimension_mismatch():
    with pytest.raises(DimensionError):
        asset_payoff([1, 2, 3], SecurityBasis.arrow_debreu(2))
    with pytest.raises(DimensionError):
        SecurityBasis(np.eye(2), OutcomeSpace.of_size(3))


@pytest.mark.parametrize(
    "matrix, expected",
    [
        (np.eye(3), True),
        (np.array([[1.0, 2.0, 0.0], [1.0, 2.0, 0.0]]), False),
        (np.array([[1.0, 1.0], [2.0, 2.0 + 1e-15]]), False),
        (np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [1.0, 1.0, 1.0]]), False),
        (np.array([[1.0, 1.0, 1.0]]), True),
        (np.zeros((1, 3)), False),
        (np.array([[np.nan, 1.0]]), False),
    ],
)
def test_verify_basis(matrix, expected):
    assert verify_basis(matrix) is expected


def test_near_degenerate_rank_via_singular_values():
    m = np.array([[1.0, 1.0], [2.0, 2.0 + 1e-15]])
    sv = np.linalg.svd(m, compute_uv=False)
    assert sv[1] / sv[0] < 1e-10
    assert verify_basis(SecurityBasis(m)) is False


@given(
    a=finite, b=finite,
    s1=arrays(float, 3, elements=finite), s2=arrays(float, 3, elements=finite),
)
def test_payoff_is_linear(a, b, s1, s2):
    basis = SecurityBasis(np.array([[1.0, 0.0, 2.0, -1.0], [0.5, 1.0, 0.0, 0.0], [0.0, 0.0, 1.0, 3.0]]))
    lhs = asset_payoff(a * s1 + b * s2, basis)
    rhs = a * asset_payoff(s1, basis) + b * asset_payoff(s2, basis)
    np.testing.assert_allclose(lhs, rhs, atol=1e-9 * (1 + np.abs(rhs).max()))


@given(s=arrays(float, 3, elements=finite))
def test_payoff_determines_shares(s):
    basis = SecurityBasis(np.array([[1.0, 0.0, 2.0, -1.0], [0.5, 1.0, 0.0, 0.0], [0.0, 0.0, 1.0, 3.0]]))
    assert verify_basis(basis)
    np.testing.assert_allclose(basis.shares_from_payoff(basis.payoff(s)), s, atol=1e-9)


def test_portfolio_is_immutable():
    p = Portfolio(1.0, [1.0, 2.0])
    with pytest.raises(ValueError):
        p.shares[0] = 3.0
    np.testing.assert_array_equal(p.gross_payoff(SecurityBasis.arrow_debreu(2)), [2.0, 3.0])
