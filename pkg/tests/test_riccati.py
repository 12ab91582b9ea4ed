import numpy as np
import pytest
import scipy.linalg as sla
from hypothesis import given, settings, strategies as st

from h2delay.errors import RiccatiError
from h2delay.lti import is_hurwitz
from h2delay.riccati import check_riccati_assumptions, hamiltonian, ric, ric_dual


def _residual(A, B, C, D, X):
    G = X @ B + C.T @ D
    return A.T @ X + X @ A + C.T @ C - G @ np.linalg.solve(D.T @ D, G.T)


def _problem(rng, n, m):
    A = rng.standard_normal((n, n))
    B = rng.standard_normal((n, m))
    C = np.vstack([rng.standard_normal((n, n)), np.zeros((m, n))])
    D = np.vstack([0.3 * rng.standard_normal((n, m)), np.eye(m)])
    return A, B, C, D


def test_scalar_closed_form():
    # x' = a x + u, cost q^2 x^2 + u^2: X = a + sqrt(a^2 + q^2)
    a, q = 0.7, 2.0
    X, F = ric(np.array([[a]]), np.eye(1), np.array([[q], [0.0]]), np.array([[0.0], [1.0]]))
    assert X[0, 0] == pytest.approx(a + np.hypot(a, q), rel=1e-12)
    assert F[0, 0] == pytest.approx(-X[0, 0], rel=1e-12)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 100_000), n=st.integers(1, 5), m=st.integers(1, 3))
def test_ric_solution_is_stabilizing(seed, n, m):
    A, B, C, D = _problem(np.random.default_rng(seed), n, m)
    sol = ric(A, B, C, D)
    scale = 1 + np.linalg.norm(sol.X)
    assert np.linalg.norm(_residual(A, B, C, D, sol.X)) <= 1e-8 * scale
    assert is_hurwitz(A + B @ sol.F)
    np.testing.assert_allclose(sol.X, sol.X.T)
    assert np.min(np.linalg.eigvalsh(sol.X)) >= -1e-10 * scale


def test_matches_scipy_when_cross_term_vanishes(rng):
    A, B, C, _ = _problem(rng, 4, 2)
    D = np.vstack([np.zeros((4, 2)), np.eye(2)])
    X = ric(A, B, C, D).X
    Xs = sla.solve_continuous_are(A, B, C.T @ C, np.eye(2))
    np.testing.assert_allclose(X, Xs, rtol=1e-9, atol=1e-9)


def test_dual_is_transposed_problem(rng):
    A, B, C, D = _problem(rng, 3, 2)
    Y, L = ric_dual(A.T, C.T, B.T, D.T)
    assert is_hurwitz(A.T + L @ B.T)
    np.testing.assert_allclose(Y, ric(A, B, C, D).X)


def test_hamiltonian_is_hamiltonian(rng):
    A, B, C, D = _problem(rng, 3, 2)
    H = hamiltonian(A, B, C, D)
    J = np.block([[np.zeros((3, 3)), np.eye(3)], [-np.eye(3), np.zeros((3, 3))]])
    np.testing.assert_allclose(J @ H, (J @ H).T, atol=1e-12)


def test_failures_are_reported():
    A = np.array([[1.0]])
    B = np.zeros((1, 1))
    C = np.array([[1.0], [0.0]])
    D = np.array([[0.0], [1.0]])
    d = check_riccati_assumptions(A, B, C, D)
    assert not d.r2_ok and not d.ok and d.failures()
    with pytest.raises(RiccatiError):
        ric(A, B, C, np.zeros((2, 1)))
    # undamped mode that is unobservable in the cost
    A = np.array([[0.0, 1.0], [-1.0, 0.0]])
    d = check_riccati_assumptions(A, np.array([[0.0], [1.0]]), np.zeros((1, 2)), np.ones((1, 1)))
    assert not d.r3_ok
    with pytest.raises(RiccatiError):
        ric(A, np.array([[0.0], [1.0]]), np.zeros((1, 2)), np.ones((1, 1)))
