import numpy as np
import pytest
import scipy.linalg as sla
from hypothesis import given, settings, strategies as st

from h2delay.delay_blocks import fir_eval
from h2delay.errors import IllConditionedError
from h2delay.loopshift import build_hamiltonian, gamma, normalize_d12
from h2delay.plant import GeneralizedPlant
from h2delay.riccati import ric, ric_dual

from oracles import h2_by_quadrature, lft_point


def _plant(rng, n=3, m0=1, mt=2, p=1, nw=2, nz=4):
    m = m0 + mt
    return GeneralizedPlant(0.5 * rng.standard_normal((n, n)), rng.standard_normal((n, nw)),
                            rng.standard_normal((n, m)), rng.standard_normal((nz, n)),
                            rng.standard_normal((nz, m)), rng.standard_normal((p, n)),
                            rng.standard_normal((p, nw)))


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 100_000), m0=st.integers(1, 2), mt=st.integers(0, 2))
def test_normalization_is_block_triangular(seed, m0, mt):
    P = _plant(np.random.default_rng(seed), m0=m0, mt=mt, nz=5)
    Pn, norm = normalize_d12(P, m0)
    np.testing.assert_allclose(Pn.D12.T @ Pn.D12, np.eye(m0 + mt), atol=1e-10)
    np.testing.assert_allclose(norm.T[m0:, :m0], 0.0)
    np.testing.assert_allclose(P.D12 @ norm.T, Pn.D12, atol=1e-12)
    np.testing.assert_allclose(P.B2 @ norm.T, Pn.B2, atol=1e-12)


def test_zero_delay_is_identity(rng):
    P = _plant(rng)
    G = gamma(P, 1, 0.0)
    assert G.fir is None
    np.testing.assert_allclose(G.modified_plant.B2, P.B2)
    np.testing.assert_allclose(G.pi_u(1j), np.eye(3))


def test_unchanged_estimation_data(rng):
    P = _plant(rng)
    G = gamma(P, 1, 0.3)
    M = G.modified_plant
    for name in ("A", "B1", "C2", "D21"):
        np.testing.assert_array_equal(getattr(M, name), getattr(P, name))
    Pn, _ = normalize_d12(P, 1)
    np.testing.assert_allclose(G.hamiltonian, build_hamiltonian(Pn, 1))
    np.testing.assert_allclose(G.sigma, sla.expm(G.hamiltonian * 0.3))


def _closed_loop_cost(P, G, F, L, tau):
    """Cost of the compensated controller on the delayed plant."""
    n, m0 = P.n, G.n_undelayed
    M = G.modified_plant
    Gss = P.to_statespace()

    def cl(s):
        k = F @ np.linalg.solve(s * np.eye(n) - (P.A + M.B2 @ F + L @ P.C2), -L)
        pu, pb = G.pi_u(s), G.pi_b(s)
        K = pu @ k @ np.linalg.inv(np.eye(P.p) - pb @ k)
        lam = np.diag([1.0] * m0 + [np.exp(-s * tau)] * (P.m - m0))
        return lft_point(Gss.evaluate(s), P.nz, P.nw, lam @ K)
    return h2_by_quadrature(cl)


def test_shifted_cost_matches_closed_loop():
    rng = np.random.default_rng(1)
    P = _plant(rng)
    tau = 0.3
    G = gamma(P, 1, tau)
    M = G.modified_plant
    Xt, Ft = ric(M.A, M.B2, M.C1, M.D12)
    Y, L = ric_dual(P.A, P.B1, P.C2, P.D21)
    Xi = Xt - G.xi_correction
    predicted = np.trace(Y @ P.C1.T @ P.C1) + np.trace(Xi @ L @ P.D21 @ P.D21.T @ L.T)
    assert _closed_loop_cost(P, G, Ft, L, tau) == pytest.approx(predicted, rel=1e-5)
    # any other gain costs more, by its excess on the modified plant
    dF = 0.05 * rng.standard_normal(Ft.shape)
    assert _closed_loop_cost(P, G, Ft + dF, L, tau) > predicted


def test_fir_parts_are_entire(rng):
    P = _plant(rng)
    G = gamma(P, 1, 0.4)
    # an FIR block stays finite at the Hamiltonian eigenvalues
    for lam in np.linalg.eigvals(G.hamiltonian)[:2]:
        assert np.all(np.isfinite(fir_eval(G.fir, lam)))


def test_ill_conditioned_sigma_raises():
    P = _plant(np.random.default_rng(4))
    P = GeneralizedPlant(P.A + 3 * np.eye(3), P.B1, P.B2, P.C1, P.D12, P.C2, P.D21)
    with pytest.raises(IllConditionedError):
        gamma(P, 1, 50.0)
