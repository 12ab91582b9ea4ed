import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from h2delay.errors import ValidationError
from h2delay.lti import StateSpace, default_grid, is_hurwitz, lft_lower, max_response_gap
from h2delay.random_instances import (four_node_cycle_example, oscillator_network, random_graph,
                                      random_plant)
from h2delay.synthesis import (AgentController, agent_controllers, aggregate_controllers,
                               build_parameterization, centralized_lqg, close_youla,
                               column_solutions, default_fd, k_opt_delay_free, k_opt_delayed,
                               q_opt_delay_free, q_opt_delayed)
from h2delay.topology import DiGraph

GRID = default_grid(30, 1e-2, 1e2)


def _scale(K):
    return 1.0 + max(np.abs(K(s)).max() for s in GRID)


def test_single_agent_is_lqg(rng):
    P = random_plant(rng, 1, graph=DiGraph(1), tau=0.3)
    K = k_opt_delayed(P)
    assert max_response_gap(K, centralized_lqg(P), GRID) <= 1e-8 * _scale(K)


def test_complete_graph_without_delay_is_lqg(rng):
    P = random_plant(rng, 3, graph=DiGraph.complete(3))
    K = k_opt_delayed(P)
    assert max_response_gap(K, centralized_lqg(P), GRID) <= 1e-8 * _scale(K)


def test_delay_free_forms_agree(chain3):
    P0 = chain3.with_tau(0.0)
    K = k_opt_delay_free(P0)
    assert max_response_gap(K, k_opt_delayed(P0), GRID) <= 1e-9 * _scale(K)
    pieces = build_parameterization(P0)
    Kq = close_youla(pieces, q_opt_delay_free(P0))
    assert max_response_gap(K, Kq, GRID) <= 1e-9 * _scale(K)


def test_nominal_gain_does_not_change_controller(chain3):
    K1 = k_opt_delayed(chain3)
    K2 = k_opt_delayed(chain3, default_fd(chain3, weight=5.0))
    assert max_response_gap(K1, K2, GRID) <= 1e-8 * _scale(K1)


def test_youla_parameter_is_stable(chain3):
    assert is_hurwitz(q_opt_delay_free(chain3).A)
    # the delayed parameter stays bounded on the imaginary axis
    Q = q_opt_delayed(chain3)
    assert max(np.abs(Q(s)).max() for s in GRID) < 1e3


def test_structure_of_delayed_controller(chain3):
    K = k_opt_delayed(chain3)
    m, p = chain3.m_parts, chain3.p_parts
    for s in GRID:
        Ks = K(s)
        # agent 1 never hears from 2 or 3, agent 2 never hears from 3
        for i, j in ((1, 2), (1, 3), (2, 3)):
            assert np.abs(Ks[np.ix_(m.indices([i]), p.indices([j]))]).max() <= 1e-10


@pytest.mark.parametrize("tau", [0.0, 0.25])
def test_agents_aggregate_to_optimum(chain3, tau):
    P = chain3.with_tau(tau)
    K = k_opt_delayed(P)
    agents = agent_controllers(P)
    assert all(a.kind == "optimal" for a in agents)
    assert max_response_gap(K, aggregate_controllers(P, agents), GRID) <= 1e-8 * _scale(K)


def test_cyclic_graph_agents(rng):
    P = oscillator_network(four_node_cycle_example(), tau=0.1)
    K = k_opt_delayed(P)
    assert max_response_gap(K, aggregate_controllers(P, agent_controllers(P)), GRID) <= 1e-8 * _scale(K)
    assert agent_controllers(P)[1].descendants == (2, 1, 3, 4)


def test_agent_data_is_local(chain3):
    for a in agent_controllers(chain3):
        idx = chain3.n_parts.indices(a.descendants)
        np.testing.assert_array_equal(a.A_desc, chain3.A[np.ix_(idx, idx)])
        assert a.ancestors == chain3.graph.strict_ancestors(a.index)
        assert set(a.transmit) <= set(a.descendants[1:])


def test_zero_perturbation_matches_optimum(chain3):
    zero = []
    for i in range(1, chain3.N + 1):
        md = chain3.m_parts.size_of(chain3.descendants(i))
        zero.append(StateSpace(-np.eye(1), np.zeros((1, chain3.p_parts.sizes[i - 1])),
                               np.zeros((md, 1)), np.zeros((md, chain3.p_parts.sizes[i - 1]))))
    agents = agent_controllers(chain3, zero)
    assert agents[0].kind == "youla"
    K = k_opt_delayed(chain3)
    assert max_response_gap(K, aggregate_controllers(chain3, agents), GRID) <= 1e-8 * _scale(K)


def test_perturbation_validation(chain3):
    with pytest.raises(ValidationError):
        agent_controllers(chain3, [None])
    bad = StateSpace(np.eye(1), np.ones((1, chain3.p_parts.sizes[0])),
                     np.ones((chain3.m_parts.size_of(chain3.descendants(1)), 1)),
                     np.zeros((chain3.m_parts.size_of(chain3.descendants(1)), chain3.p_parts.sizes[0])))
    with pytest.raises(ValidationError):
        agent_controllers(chain3, [bad, None, None])


def test_serialization_round_trip(chain3):
    agents = agent_controllers(chain3)
    back = [AgentController.from_dict(a.to_dict()) for a in agents]
    K1 = aggregate_controllers(chain3, agents)
    K2 = aggregate_controllers(chain3, back)
    assert max_response_gap(K1, K2, GRID) == 0.0


@settings(max_examples=8, deadline=None)
@given(seed=st.integers(0, 100_000), N=st.integers(2, 3), tau=st.sampled_from([0.0, 0.1, 0.4]))
def test_random_instances_aggregate(seed, N, tau):
    rng = np.random.default_rng(seed)
    P = random_plant(rng, N, n_sizes=(1, 2), graph=random_graph(rng, N, 0.6), tau=tau)
    K = k_opt_delayed(P)
    assert max_response_gap(K, aggregate_controllers(P, agent_controllers(P)), GRID) <= 1e-8 * _scale(K)
    # the delay-free closed loop is internally stable
    if tau == 0:
        cl = lft_lower(P.to_statespace(), k_opt_delay_free(P))
        assert is_hurwitz(cl.A)
    assert len(column_solutions(P)) == N
