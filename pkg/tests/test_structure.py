import numpy as np
import pytest

from h2delay.delay_blocks import DelayedSystem
from h2delay.lti import StateSpace, lyapunov_solve, max_response_gap
from h2delay.random_instances import random_plant
from h2delay.structure import (hankel_singular_values, minimal_realization, normal_equation_check,
                               stable_part, youla_structure_check)
from h2delay.topology import DiGraph, Link


def test_stable_part_splits_response(rng):
    As = np.diag([-1.0, -2.0])
    Au = np.diag([0.5, 3.0])
    A = np.block([[As, rng.standard_normal((2, 2))], [np.zeros((2, 2)), Au]])
    G = StateSpace(A, rng.standard_normal((4, 1)), rng.standard_normal((1, 4)), np.zeros((1, 1)))
    S = stable_part(G)
    assert S.n_states == 2
    # the remainder has only unstable poles
    R = StateSpace(G.A, G.B, G.C, G.D) - S
    Rm = minimal_realization(R)
    assert np.all(np.linalg.eigvals(Rm.A).real > 0)


def test_minimal_realization_drops_hidden_modes():
    A = np.diag([-1.0, -2.0, -3.0])
    B = np.array([[1.0], [0.0], [1.0]])
    C = np.array([[1.0, 1.0, 0.0]])
    G = StateSpace(A, B, C, np.zeros((1, 1)))
    M = minimal_realization(G)
    assert M.n_states == 1
    assert max_response_gap(G, M) <= 1e-12


def test_hankel_values_first_order():
    # 1/(s+a) has a single Hankel singular value 1/(2a)
    hsv = hankel_singular_values(StateSpace([[-2.0]], [[1.0]], [[1.0]], [[0.0]]))
    np.testing.assert_allclose(hsv, [0.25])
    G = StateSpace(np.diag([-1.0, -4.0]), np.ones((2, 1)), np.ones((1, 2)), np.zeros((1, 1)))
    hsv = hankel_singular_values(G)
    assert np.all(np.diff(hsv) <= 0) and hsv[-1] > 0
    Wc = lyapunov_solve(G.A.T, G.B @ G.B.T)
    Wo = lyapunov_solve(G.A, G.C.T @ G.C)
    assert np.sum(hsv ** 2) == pytest.approx(np.trace(Wc @ Wo), rel=1e-12)


def test_youla_structure_on_chain(chain3):
    checks = youla_structure_check(chain3)
    assert all(c.ok for c in checks)
    links = {(c.row, c.col): c.link for c in checks}
    assert links[(1, 2)] == Link.ZERO and links[(3, 1)] == Link.DELAYED


def test_youla_structure_detects_violation(chain3):
    # a parameter with a nonzero block where the graph forbids one
    m, p = chain3.m, chain3.p
    bad = DelayedSystem.from_statespace(
        StateSpace(-np.eye(1), np.ones((1, p)), np.ones((m, 1)), np.zeros((m, p))), chain3.tau)
    assert not all(c.ok for c in youla_structure_check(chain3, bad))


def test_normal_equations_two_nodes():
    P = random_plant(np.random.default_rng(5), 2, graph=DiGraph(2, ((1, 2),)))
    blocks = normal_equation_check(P)
    assert all(b.stable_order == 0 for b in blocks if b.path)
    assert {(b.row, b.col) for b in blocks if not b.path} == {(1, 2)}
