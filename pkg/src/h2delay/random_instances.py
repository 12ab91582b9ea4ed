"""Random and reference problem instances for tests and examples."""

from __future__ import annotations

import numpy as np

from .plant import Plant
from .topology import DiGraph


def random_graph(rng: np.random.Generator, N: int, density: float = 0.5,
                 acyclic: bool = True) -> DiGraph:
    """Random graph; when ``acyclic`` only edges ``j -> i`` with ``j < i`` are drawn."""
    edges = []
    for j in range(1, N + 1):
        for i in range(1, N + 1):
            if i == j or (acyclic and j > i):
                continue
            if rng.random() < density:
                edges.append((j, i))
    return DiGraph(N, tuple(edges))


def random_plant(rng: np.random.Generator, N: int = 2, n_sizes=(1, 2, 3), m_sizes=(1, 2),
                 p_sizes=(1, 2), graph: DiGraph | None = None, tau: float = 0.0,
                 stable: bool = False, coupled_d12: bool = True, noise: float = 0.5) -> Plant:
    """Random plant satisfying the standard solvability assumptions generically.

    Parameters
    ----------
    rng : numpy Generator
    N : int
        Number of agents.
    n_sizes, m_sizes, p_sizes : sequence of int
        Candidate per-agent dimensions.
    graph : DiGraph, optional
        Defaults to a random acyclic graph.
    stable : bool
        Shift each ``A_ii`` so it is Hurwitz with margin.
    coupled_d12 : bool
        Use a dense ``D12`` that couples the agents' inputs in the cost.
    """
    A, B1, B2, C2, D21 = [], [], [], [], []
    ns = []
    for _ in range(N):
        n = int(rng.choice(n_sizes))
        m = int(rng.choice(m_sizes))
        p = int(rng.choice(p_sizes))
        a = 0.6 * rng.standard_normal((n, n))
        if stable:
            a = a - (max(np.linalg.eigvals(a).real) + 0.3 + rng.random()) * np.eye(n)
        A.append(a)
        B1.append(np.hstack([rng.standard_normal((n, n)), np.zeros((n, p))]))
        B2.append(rng.standard_normal((n, m)))
        C2.append(rng.standard_normal((p, n)))
        D21.append(np.hstack([np.zeros((p, n)), noise * np.eye(p) + 0.1 * rng.standard_normal((p, p))]))
        ns.append((n, m))
    n_tot = sum(k for k, _ in ns)
    m_tot = sum(k for _, k in ns)
    nz0 = max(2, n_tot // 2 + 1)
    C1 = np.vstack([rng.standard_normal((nz0, n_tot)), np.zeros((m_tot, n_tot))])
    if coupled_d12:
        Dm = np.eye(m_tot) + 0.3 * rng.standard_normal((m_tot, m_tot))
        D12 = np.vstack([0.3 * rng.standard_normal((nz0, m_tot)), Dm])
    else:
        D12 = np.vstack([np.zeros((nz0, m_tot)), np.eye(m_tot)])
    if graph is None:
        graph = random_graph(rng, N)
    return Plant.from_blocks(A, B1, B2, C2, D21, C1, D12, graph, tau)


def diamond_graph() -> DiGraph:
    """``1 -> 2, 1 -> 3, 2 -> 4, 3 -> 4``."""
    return DiGraph(4, ((1, 2), (1, 3), (2, 4), (3, 4)))


def four_node_cycle_example() -> DiGraph:
    """Four nodes where 1, 2, 3 form a cycle that feeds node 4.

    Node 2 reaches 1, 3 and 4, and its strict ancestors are 1 and 3.
    """
    return DiGraph(4, ((1, 2), (2, 3), (3, 1), (3, 4)))


def oscillator_network(graph: DiGraph | None = None, tau: float = 0.0, damping: float = 0.1,
                       stiffness: float = 1.0, sync_weight: float = 1.0,
                       input_weight: float = 1.0, process_noise: float = 1.0,
                       sensor_noise: float = 0.1) -> Plant:
    """Four lightly damped oscillators to be synchronized.

    Each agent is ``q'' = -stiffness q - damping q' + u + noise`` and
    measures its position and velocity with small sensor noise.  The cost
    penalizes every pairwise position difference and all inputs.
    """
    graph = graph if graph is not None else diamond_graph()
    N = graph.node_count
    a = np.array([[0.0, 1.0], [-stiffness, -damping]])
    b2 = np.array([[0.0], [1.0]])
    b1 = np.array([[0.0, 0.0, 0.0], [process_noise, 0.0, 0.0]])
    c2 = np.eye(2)
    d21 = np.array([[0.0, sensor_noise, 0.0], [0.0, 0.0, sensor_noise]])
    pairs = [(i, j) for i in range(N) for j in range(i + 1, N)]
    C1 = np.zeros((len(pairs) + N, 2 * N))
    for r, (i, j) in enumerate(pairs):
        C1[r, 2 * i] = sync_weight
        C1[r, 2 * j] = -sync_weight
    D12 = np.vstack([np.zeros((len(pairs), N)), input_weight * np.eye(N)])
    return Plant.from_blocks([a] * N, [b1] * N, [b2] * N, [c2] * N, [d21] * N, C1, D12, graph, tau)
