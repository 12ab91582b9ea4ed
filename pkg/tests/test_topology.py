import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from h2delay.errors import DimensionError, ValidationError
from h2delay.random_instances import diamond_graph, four_node_cycle_example, random_graph
from h2delay.topology import (BlockPartition, DiGraph, IndexSet, Link, ancestors, condense_cycles,
                              conforms, descendants, is_multitree, pattern_inverse,
                              pattern_product, selector, sparsity_pattern, strict_ancestors,
                              strict_descendants)


def test_chain_sets():
    G = DiGraph.chain(3)
    assert descendants(G, 1) == (1, 2, 3)
    assert descendants(G, 2) == (2, 3)
    assert ancestors(G, 3) == (3, 1, 2)
    assert strict_descendants(G, 3) == ()
    assert strict_ancestors(G, 1) == ()


def test_diamond_sets():
    G = diamond_graph()
    assert descendants(G, 1) == (1, 2, 3, 4)
    assert ancestors(G, 4) == (4, 1, 2, 3)
    assert descendants(G, 2) == (2, 4)
    assert not is_multitree(G)
    assert is_multitree(DiGraph.chain(4))


def test_cycle_example():
    G = four_node_cycle_example()
    assert not G.is_acyclic()
    assert descendants(G, 2) == (2, 1, 3, 4)
    assert strict_ancestors(G, 2) == (1, 3)
    C, members = condense_cycles(G)
    assert members == [(1, 2, 3), (4,)]
    assert C.edges == ((1, 2),)
    with pytest.raises(ValidationError):
        is_multitree(G)


def test_edges_are_canonical():
    G = DiGraph(3, [(2, 3), (1, 2), (1, 2), (2, 2)])
    assert G.edges == ((1, 2), (2, 3))
    with pytest.raises(ValidationError):
        DiGraph(2, [(1, 3)])
    with pytest.raises(ValidationError):
        IndexSet((1, 3, 2))


def test_partition_and_selector():
    part = BlockPartition((2, 1, 3))
    np.testing.assert_array_equal(part.indices([3, 1]), [3, 4, 5, 0, 1])
    E = selector(part, [2, 3])
    assert E.shape == (6, 4)
    np.testing.assert_array_equal(E.T @ np.arange(6.0), [2, 3, 4, 5])
    with pytest.raises(DimensionError):
        part.indices([4])


def test_sparsity_pattern_chain():
    P = sparsity_pattern(DiGraph.chain(3))
    L, D, Z = Link.LOCAL, Link.DELAYED, Link.ZERO
    np.testing.assert_array_equal(P, [[L, Z, Z], [D, L, Z], [D, D, L]])


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 100_000), N=st.integers(1, 6), acyclic=st.booleans())
def test_structure_is_closed(seed, N, acyclic):
    G = random_graph(np.random.default_rng(seed), N, acyclic=acyclic)
    S = sparsity_pattern(G)
    # admissible controllers are closed under products and (I - K)^{-1}
    assert conforms(pattern_product(S, S), S)
    assert conforms(pattern_inverse(S), S)
    for i in range(1, N + 1):
        for j in descendants(G, i):
            assert i in ancestors(G, j)
        assert descendants(G, i).anchor == i
    C, members = condense_cycles(G)
    assert C.is_acyclic()
    assert sorted(k for grp in members for k in grp) == list(range(1, N + 1))
