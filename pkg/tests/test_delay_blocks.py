import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad

from h2delay.delay_blocks import (AdobeDelay, DelayedSystem, FirBlock, SignalBuilder,
                                  assemble_pi_b, assemble_pi_u, delayed_lft_lower,
                                  delayed_series, fir_eval, fir_h2_sq, fir_impulse, pi_tau)
from h2delay.errors import AlgebraicLoopError, ValidationError
from h2delay.lti import StateSpace, lft_lower
from h2delay.topology import BlockPartition

PTS = (0.0, 0.4j, 1.0 + 2.0j, 15.0j)


def _sys(rng, n, q, r, stable=False):
    A = rng.standard_normal((n, n))
    if stable:
        A -= (max(np.linalg.eigvals(A).real) + 0.5) * np.eye(n)
    return StateSpace(A, rng.standard_normal((n, q)), rng.standard_normal((r, n)), np.zeros((r, q)))


def test_scalar_fir_closed_form():
    # C e^{a(t - tau)} B on [0, tau] has transform (e^{-a tau} - e^{-s tau}) / (s - a)
    a, tau = 0.8, 0.5
    F = FirBlock([[a]], [[1.0]], [[1.0]], tau)
    for s in (0.3j, 2.0 + 1.0j):
        assert fir_eval(F, s)[0, 0] == pytest.approx((np.exp(-a * tau) - np.exp(-s * tau)) / (s - a))
    # the removable singularity at s = a is handled
    assert fir_eval(F, a)[0, 0] == pytest.approx(tau * np.exp(-a * tau), rel=1e-8)
    assert fir_impulse(F, 0.2)[0, 0] == pytest.approx(np.exp(a * (0.2 - tau)))
    assert fir_impulse(F, 0.6)[0, 0] == 0.0
    expected = (1 - np.exp(-2 * a * tau)) / (2 * a)
    assert fir_h2_sq(F) == pytest.approx(expected, rel=1e-12)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 100_000), tau=st.floats(0.05, 2.0))
def test_completion_cancels_delay_poles(seed, tau):
    rng = np.random.default_rng(seed)
    G = _sys(rng, 3, 2, 2)
    F = pi_tau(G, tau)
    # G e^{-s tau} + F is rational with realization (A, e^{-A tau} B, C)
    R = StateSpace(G.A, F.input_matrix, G.C, np.zeros((2, 2)))
    for s in PTS[1:]:
        np.testing.assert_allclose(G.evaluate(s) * np.exp(-s * tau) + fir_eval(F, s),
                                   R.evaluate(s), atol=1e-8 * (1 + np.abs(R.evaluate(s)).max()))


def test_fir_h2_matches_impulse_integral(rng):
    F = FirBlock(rng.standard_normal((2, 2)), rng.standard_normal((2, 1)),
                 rng.standard_normal((2, 2)), 0.7)
    direct = quad(lambda t: np.sum(fir_impulse(F, t) ** 2), 0, 0.7, epsabs=1e-13)[0]
    assert fir_h2_sq(F) == pytest.approx(direct, rel=1e-9)
    D = DelayedSystem.from_fir(F)
    for s in PTS:
        np.testing.assert_allclose(D(s), fir_eval(F, s), atol=1e-10)


def test_builder_docstring_example():
    b = SignalBuilder(tau=1.0)
    u = b.input(1)
    x = b.state(1)
    b.set_derivative(x, -1.0 * np.eye(1) @ x + b.delay(u))
    G = b.build([u], [x])
    for s in PTS:
        assert G(s)[0, 0] == pytest.approx(np.exp(-s) / (s + 1))
    with pytest.raises(ValidationError):
        b.delay(b.delay(u))


def test_adobe_and_pure_delay():
    A = AdobeDelay(BlockPartition((1, 2)), 0.3)
    np.testing.assert_allclose(np.diag(A(1j)), [1, np.exp(-0.3j), np.exp(-0.3j)])
    D = DelayedSystem.pure_delay(2, 0.3)
    np.testing.assert_allclose(D(1j), np.exp(-0.3j) * np.eye(2))
    with pytest.raises(ValidationError):
        D.to_statespace()


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 100_000))
def test_series_and_lft_match_pointwise(seed):
    rng = np.random.default_rng(seed)
    tau = 0.35
    G1 = DelayedSystem.from_parts(tau, _sys(rng, 2, 2, 2), delay_taps=[_sys(rng, 1, 2, 2)])
    G2 = _sys(rng, 2, 2, 1)
    S = delayed_series(G1, G2)
    P = _sys(rng, 3, 3, 3, stable=True)
    Kr = _sys(rng, 2, 1, 1)
    L = lft_lower(P, Kr)
    K = DelayedSystem.from_parts(tau, Kr)
    for s in PTS:
        np.testing.assert_allclose(S(s), G2.evaluate(s) @ G1(s), atol=1e-9)
        np.testing.assert_allclose(delayed_lft_lower(P, K)(s), L.evaluate(s), atol=1e-9)


def test_lft_with_delayed_controller(rng):
    tau = 0.4
    P = _sys(rng, 2, 2, 2, stable=True)
    K = DelayedSystem.from_parts(tau, delay_taps=[StateSpace.static(0.5 * np.ones((1, 1)))])
    CL = delayed_lft_lower(P, K)
    for s in PTS:
        p, k = P.evaluate(s), K(s)
        ref = p[:1, :1] + p[:1, 1:] @ k @ np.linalg.solve(np.eye(1) - p[1:, 1:] @ k, p[1:, :1])
        np.testing.assert_allclose(CL(s), ref, atol=1e-10)
    Pf = StateSpace(P.A, P.B, P.C, np.ones((2, 2)))
    with pytest.raises(AlgebraicLoopError):
        delayed_lft_lower(Pf, K)


def test_loop_shift_compensators(rng):
    tau = 0.2
    F = FirBlock(rng.standard_normal((2, 2)), rng.standard_normal((2, 2)),
                 rng.standard_normal((1, 2)), tau)
    tap = rng.standard_normal((1, 2))
    U = assemble_pi_u(F, 1, 2, tau, tap)
    Bm = assemble_pi_b(F, 1, 2, tau)
    for s in PTS:
        f = fir_eval(F, s)
        ref = np.eye(3, dtype=complex)
        ref[:1, 1:] += f + tap * np.exp(-s * tau)
        np.testing.assert_allclose(U(s), ref, atol=1e-10)
        np.testing.assert_allclose(Bm(s), np.hstack([np.zeros((1, 1)), f]), atol=1e-10)
    # FIR state bookkeeping is recorded for the simulator
    assert len(U.fir_tags) == 1 and U.fir_tags[0].A.shape == (2, 2)
