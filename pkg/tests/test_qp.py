import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fieldrobot.errors import ConfigError, QpInfeasibleError
from fieldrobot.qp import AT_LOWER, AT_UPPER, FREE, kkt_residual, solve_qp
from oracles import qp_by_enumeration, random_qp


def test_unconstrained_minimizer():
    H = np.array([[2.0, 0.5], [0.5, 1.0]])
    g = np.array([-1.0, 0.3])
    r = solve_qp(H, g)
    assert np.allclose(r.x, np.linalg.solve(H, -g))
    assert np.all(r.active == FREE)


def test_one_dimensional_clipping():
    r = solve_qp(np.array([[1.0]]), np.array([-5.0]), [-1.0], [1.0])
    assert r.x[0] == 1.0
    assert r.active[0] == AT_UPPER
    assert r.bound_multipliers[0] == pytest.approx(-4.0)
    r = solve_qp(np.array([[1.0]]), np.array([5.0]), [-1.0], [1.0])
    assert r.x[0] == -1.0
    assert r.active[0] == AT_LOWER


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(1, 7))
def test_matches_enumeration(seed, n):
    H, g, lo, hi = random_qp(np.random.default_rng(seed), n)
    r = solve_qp(H, g, lo, hi)
    assert np.allclose(r.x, qp_by_enumeration(H, g, lo, hi), atol=1e-7)
    assert r.kkt_residual(H, g, lo, hi) < 1e-8


def test_equality_constraints():
    H = np.eye(3)
    g = np.zeros(3)
    A = np.array([[1.0, 1.0, 1.0]])
    r = solve_qp(H, g, [-1, -1, 0.5], [1, 1, 1], A, [1.0])
    assert np.allclose(r.x, [0.25, 0.25, 0.5])
    assert kkt_residual(H, g, np.array([-1, -1, 0.5]), np.array([1.0, 1, 1]), r.x, r.bound_multipliers,
                        A, np.array([1.0]), r.eq_multipliers) < 1e-10


def test_infeasible_equality():
    with pytest.raises(QpInfeasibleError):
        solve_qp(np.eye(2), np.zeros(2), [0, 0], [1, 1], np.array([[1.0, 1.0]]), [5.0])


def test_inverted_bounds_rejected():
    with pytest.raises(ConfigError):
        solve_qp(np.eye(1), np.zeros(1), [1.0], [0.0])


def test_warm_start_same_answer():
    H, g, lo, hi = random_qp(np.random.default_rng(3), 8)
    cold = solve_qp(H, g, lo, hi)
    warm = solve_qp(H, g, lo, hi, x0=cold.x)
    assert np.allclose(cold.x, warm.x, atol=1e-12)
    assert warm.iterations <= cold.iterations
