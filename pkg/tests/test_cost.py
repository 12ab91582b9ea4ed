import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from h2delay.cost import (closed_loop_map, cost_centralized, cost_dec_delayed, cost_decentralized,
                          cost_delayed, cost_report, cost_suboptimal_penalty,
                          decentralization_gap_dual, gramian_theta, gramian_w_x, ordering_check,
                          x_decdel)
from h2delay.lti import StateSpace, h2_norm_sq, lft_lower
from h2delay.random_instances import oscillator_network, random_graph, random_plant
from h2delay.synthesis import (agent_controllers, aggregate_controllers, centralized_lqg,
                               k_opt_delay_free, k_opt_delayed)
from h2delay.topology import DiGraph

from oracles import h2_by_quadrature, lft_point


def _delayed_cost(P, K):
    G = P.to_statespace()
    return h2_by_quadrature(lambda s: lft_point(G.evaluate(s), P.nz, P.nw, K(s)))


def test_centralized_cost_matches_gramian(chain3):
    J = cost_centralized(chain3)
    assert J == pytest.approx(h2_norm_sq(lft_lower(chain3.to_statespace(), centralized_lqg(chain3))),
                              rel=1e-10)
    assert cost_centralized(chain3, dual=True) == pytest.approx(J, rel=1e-10)


def test_delay_free_cost_matches_gramian(chain3):
    P = chain3.with_tau(0.0)
    J = cost_decentralized(P)
    assert J == pytest.approx(h2_norm_sq(lft_lower(P.to_statespace(), k_opt_delay_free(P))), rel=1e-8)
    assert J == pytest.approx(cost_dec_delayed(P), rel=1e-12)
    assert J == pytest.approx(h2_norm_sq(closed_loop_map(P)), rel=1e-10)
    assert J - cost_centralized(P) == pytest.approx(decentralization_gap_dual(P), rel=1e-8)


def test_delayed_cost_matches_frequency_integral(chain3):
    J = cost_dec_delayed(chain3)
    assert _delayed_cost(chain3, k_opt_delayed(chain3)) == pytest.approx(J, rel=1e-6)


def test_gramians(chain3):
    for i in (1, 2):
        np.testing.assert_allclose(gramian_w_x(chain3, i), gramian_w_x(chain3, i, definitional=True),
                                   atol=1e-10)
    np.testing.assert_allclose(gramian_theta(chain3), gramian_theta(chain3, solve=True), atol=1e-10)


def test_complete_graph_limits(rng):
    P = random_plant(rng, 3, graph=DiGraph.complete(3))
    assert cost_decentralized(P) == pytest.approx(cost_centralized(P), rel=1e-8)
    assert cost_delayed(P.with_tau(0.3)) == pytest.approx(cost_dec_delayed(P.with_tau(0.3)), rel=1e-8)


def test_empty_graph_ignores_delay():
    P = oscillator_network(DiGraph.empty(4))
    J = [cost_dec_delayed(P.with_tau(t)) for t in (0.0, 0.5, 2.0)]
    assert max(J) - min(J) <= 1e-10 * J[0]


def test_cost_grows_with_delay():
    P = oscillator_network()
    J = [cost_dec_delayed(P.with_tau(t)) for t in np.linspace(0, 1, 6)]
    assert np.all(np.diff(J) >= -1e-10 * J[0])


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 100_000), N=st.integers(1, 3), tau=st.sampled_from([0.0, 0.2, 0.6]))
def test_ordering_holds(seed, N, tau):
    rng = np.random.default_rng(seed)
    P = random_plant(rng, N, graph=random_graph(rng, N, 0.5), tau=tau)
    m = ordering_check(P)
    assert m.ok()
    Js = cost_report(P)
    assert Js.J_cen <= Js.J_dec * (1 + 1e-9) and Js.J_dec <= Js.J_decdel * (1 + 1e-9)
    assert Js.J_cen <= Js.J_del * (1 + 1e-9) and Js.J_del <= Js.J_decdel * (1 + 1e-9)


def test_penalty_matches_frequency_integral(pair):
    rng = np.random.default_rng(2)
    q = []
    for i in (1, 2):
        md = pair.m_parts.size_of(pair.descendants(i))
        q.append(StateSpace(-1.5 * np.eye(2) + 0.3 * rng.standard_normal((2, 2)),
                            0.4 * rng.standard_normal((2, 1)), rng.standard_normal((md, 2)),
                            np.zeros((md, 1))))
    K = aggregate_controllers(pair, agent_controllers(pair, q))
    excess = _delayed_cost(pair, K) - cost_dec_delayed(pair)
    assert cost_suboptimal_penalty(pair, q) == pytest.approx(excess, rel=1e-5)
    assert cost_suboptimal_penalty(pair, [None, None]) == 0.0


def test_report(chain3):
    rep = cost_report(chain3)
    names = [k for k, _ in rep.rows()]
    assert names[:4] == ["J_cen", "J_dec", "J_del", "J_decdel"]
    assert rep.to_dict()["J_decdel"] == pytest.approx(cost_dec_delayed(chain3))
    np.testing.assert_allclose(rep.X_decdel, x_decdel(chain3))
