import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad

from h2delay.errors import DimensionError, NotHurwitzError, NumericalError
from h2delay.lti import (StateSpace, append, block_matrix, conj_transpose, default_grid,
                         h2_norm_sq, hstack, is_hurwitz, lft_lower, lft_upper,
                         lyapunov_solve, max_response_gap, parallel, series, vstack)


def _random_stable(rng, n, q, r):
    A = rng.standard_normal((n, n))
    A -= (max(np.linalg.eigvals(A).real) + 0.5) * np.eye(n)
    return StateSpace(A, rng.standard_normal((n, q)), rng.standard_normal((r, n)),
                      rng.standard_normal((r, q)))


def test_first_order_h2():
    # 1/(s+a) has squared H2 norm 1/(2a)
    for a in (0.5, 1.0, 4.0):
        assert h2_norm_sq(StateSpace([[-a]], [[1.0]], [[1.0]], [[0.0]])) == pytest.approx(1 / (2 * a))


def test_h2_matches_frequency_integral(rng):
    G = _random_stable(rng, 3, 2, 2)
    G = StateSpace(G.A, G.B, G.C, np.zeros_like(G.D))
    f = lambda w: np.linalg.norm(G.evaluate(1j * w), "fro") ** 2
    integral = quad(f, 0, np.inf, limit=400)[0] / np.pi
    assert h2_norm_sq(G) == pytest.approx(integral, rel=1e-7)


def test_h2_rejects_feedthrough():
    with pytest.raises(NumericalError):
        h2_norm_sq(StateSpace([[-1.0]], [[1.0]], [[1.0]], [[1.0]]))


def test_lyapunov_rejects_unstable():
    with pytest.raises(NotHurwitzError):
        lyapunov_solve(np.array([[0.1]]), np.eye(1))


def test_static_and_shapes():
    G = StateSpace.static(np.ones((2, 3)))
    assert G.n_states == 0 and G.shape == (2, 3)
    np.testing.assert_allclose(G.evaluate(1j), np.ones((2, 3)))
    with pytest.raises(DimensionError):
        StateSpace(np.zeros((0, 0)), np.zeros((0, 3)), np.zeros((2, 0)), np.zeros((2, 3)),
                   row_partition=(1, 2))


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_interconnections_match_pointwise_algebra(seed):
    rng = np.random.default_rng(seed)
    G1 = _random_stable(rng, 2, 2, 3)
    G2 = _random_stable(rng, 3, 3, 2)
    G3 = _random_stable(rng, 1, 2, 3)
    for s in (0.3j, 1.0 + 2.0j, 7.0j):
        a, b, c = G1.evaluate(s), G2.evaluate(s), G3.evaluate(s)
        np.testing.assert_allclose(series(G1, G2).evaluate(s), b @ a, atol=1e-9)
        np.testing.assert_allclose(parallel(G1, G3).evaluate(s), a + c, atol=1e-9)
        np.testing.assert_allclose(hstack(G1, G1).evaluate(s), np.hstack([a, a]), atol=1e-9)
        np.testing.assert_allclose(vstack(G1, G3).evaluate(s), np.vstack([a, c]), atol=1e-9)
        D = append(G1, G2).evaluate(s)
        np.testing.assert_allclose(D[:3, :2], a, atol=1e-9)
        np.testing.assert_allclose(D[3:, 2:], b, atol=1e-9)
        np.testing.assert_allclose(block_matrix([[G1, G1], [G3, G3]]).evaluate(s),
                                   np.block([[a, a], [c, c]]), atol=1e-9)
        sc = -np.conj(s)
        np.testing.assert_allclose(conj_transpose(G1).evaluate(s), G1.evaluate(sc).conj().T,
                                   atol=1e-9)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_lft_matches_pointwise_formula(seed):
    rng = np.random.default_rng(seed)
    P = _random_stable(rng, 3, 3, 3)
    K = _random_stable(rng, 2, 1, 1)
    K = StateSpace(K.A, K.B, K.C, 0.1 * K.D)
    for s in (0.5j, 2.0 + 1.0j):
        p, k = P.evaluate(s), K.evaluate(s)
        low = p[:2, :2] + p[:2, 2:] @ k @ np.linalg.solve(np.eye(1) - p[2:, 2:] @ k, p[2:, :2])
        up = p[1:, 1:] + p[1:, :1] @ k @ np.linalg.solve(np.eye(1) - p[:1, :1] @ k, p[:1, 1:])
        np.testing.assert_allclose(lft_lower(P, K).evaluate(s), low, atol=1e-8)
        np.testing.assert_allclose(lft_upper(P, K).evaluate(s), up, atol=1e-8)


def test_hurwitz_and_gap(rng):
    assert is_hurwitz(-np.eye(2)) and not is_hurwitz(np.diag([-1.0, 0.0]))
    G = _random_stable(rng, 2, 1, 1)
    assert max_response_gap(G, G) == 0.0
    assert default_grid(include_zero=True)[0] == 0
