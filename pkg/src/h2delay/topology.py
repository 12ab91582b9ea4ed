"""Communication graphs, reachability sets and sparsity patterns.

Node indices are 1-based in every public function, matching configuration
files.  An edge ``(j, i)`` means agent ``j`` sends its information to agent
``i``.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum
from typing import Iterable, Sequence

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import breadth_first_order, connected_components

from .errors import DimensionError, ValidationError


class Link(IntEnum):
    """Entry type of a structured transfer matrix."""

    ZERO = 0
    DELAYED = 1
    LOCAL = 2


class IndexSet(tuple):
    """Ordered node set: the anchor first, then the others in ascending order."""

    def __new__(cls, nodes: Iterable[int]):
        nodes = tuple(int(k) for k in nodes)
        if len(set(nodes)) != len(nodes):
            raise ValidationError(f"duplicate nodes in {nodes}")
        if list(nodes[1:]) != sorted(nodes[1:]):
            raise ValidationError(f"nodes after the anchor must ascend: {nodes}")
        return super().__new__(cls, nodes)

    @classmethod
    def anchored(cls, anchor: int, others: Iterable[int]) -> "IndexSet":
        return cls((anchor, *sorted(set(others) - {anchor})))

    @property
    def anchor(self) -> int:
        return self[0]

    @property
    def strict(self) -> tuple[int, ...]:
        return tuple(self[1:])

    def zero_based(self) -> list[int]:
        return [k - 1 for k in self]


@dataclass(frozen=True)
class BlockPartition:
    """Sizes of consecutive blocks, e.g. per-agent state dimensions."""

    sizes: tuple[int, ...]

    def __post_init__(self):
        sizes = tuple(int(k) for k in self.sizes)
        if any(k < 1 for k in sizes):
            raise ValidationError(f"block sizes must be positive, got {sizes}")
        object.__setattr__(self, "sizes", sizes)

    def __len__(self):
        return len(self.sizes)

    @property
    def total(self) -> int:
        return sum(self.sizes)

    @property
    def offsets(self) -> np.ndarray:
        return np.concatenate([[0], np.cumsum(self.sizes)]).astype(int)

    def indices(self, nodes: Iterable[int]) -> np.ndarray:
        """Scalar indices of the given (1-based) blocks, in the given order."""
        off = self.offsets
        out = []
        for k in nodes:
            if not 1 <= k <= len(self.sizes):
                raise DimensionError(f"block {k} outside 1..{len(self.sizes)}")
            out.extend(range(off[k - 1], off[k]))
        return np.asarray(out, dtype=int)

    def size_of(self, nodes: Iterable[int]) -> int:
        return sum(self.sizes[k - 1] for k in nodes)


@dataclass(frozen=True)
class DiGraph:
    """Directed graph on nodes ``1..node_count``; edge ``(j, i)`` is ``j -> i``."""

    node_count: int
    edges: tuple[tuple[int, int], ...] = ()

    def __post_init__(self):
        N = int(self.node_count)
        if N < 1:
            raise ValidationError("a graph needs at least one node")
        clean = set()
        for e in self.edges:
            j, i = (int(v) for v in e)
            if not (1 <= j <= N and 1 <= i <= N):
                raise ValidationError(f"edge {(j, i)} references a node outside 1..{N}")
            if i != j:
                clean.add((j, i))
        object.__setattr__(self, "node_count", N)
        object.__setattr__(self, "edges", tuple(sorted(clean)))

    @classmethod
    def empty(cls, N: int) -> "DiGraph":
        return cls(N, ())

    @classmethod
    def complete(cls, N: int) -> "DiGraph":
        return cls(N, tuple((j, i) for j in range(1, N + 1) for i in range(1, N + 1) if i != j))

    @classmethod
    def chain(cls, N: int) -> "DiGraph":
        return cls(N, tuple((k, k + 1) for k in range(1, N)))

    def adjacency(self) -> np.ndarray:
        """Boolean matrix with ``M[j-1, i-1]`` set for each edge ``j -> i``."""
        M = np.zeros((self.node_count, self.node_count), dtype=bool)
        for j, i in self.edges:
            M[j - 1, i - 1] = True
        return M

    def reachability(self) -> np.ndarray:
        """``R[j, i]`` is true when node ``i+1`` is reachable from ``j+1`` (reflexive)."""
        N = self.node_count
        adj = csr_matrix(self.adjacency().astype(np.int8))
        R = np.zeros((N, N), dtype=bool)
        for j in range(N):
            R[j, breadth_first_order(adj, j, directed=True, return_predecessors=False)] = True
        return R

    def _check(self, i: int):
        if not 1 <= int(i) <= self.node_count:
            raise ValidationError(f"node {i} outside 1..{self.node_count}")

    def descendants(self, i: int) -> IndexSet:
        self._check(i)
        R = self.reachability()
        return IndexSet.anchored(i, (np.flatnonzero(R[i - 1]) + 1).tolist())

    def ancestors(self, i: int) -> IndexSet:
        self._check(i)
        R = self.reachability()
        return IndexSet.anchored(i, (np.flatnonzero(R[:, i - 1]) + 1).tolist())

    def strict_descendants(self, i: int) -> tuple[int, ...]:
        return self.descendants(i).strict

    def strict_ancestors(self, i: int) -> tuple[int, ...]:
        return self.ancestors(i).strict

    def is_acyclic(self) -> bool:
        n_comp, _ = connected_components(csr_matrix(self.adjacency().astype(np.int8)),
                                         directed=True, connection="strong")
        return n_comp == self.node_count


def descendants(G: DiGraph, i: int) -> IndexSet:
    return G.descendants(i)


def ancestors(G: DiGraph, i: int) -> IndexSet:
    return G.ancestors(i)


def strict_descendants(G: DiGraph, i: int) -> tuple[int, ...]:
    return G.strict_descendants(i)


def strict_ancestors(G: DiGraph, i: int) -> tuple[int, ...]:
    return G.strict_ancestors(i)


def selector(partition: BlockPartition | Sequence[int], nodes: Sequence[int]) -> np.ndarray:
    """Columns of the identity picking the blocks ``nodes`` in the given order."""
    if not isinstance(partition, BlockPartition):
        partition = BlockPartition(tuple(partition))
    idx = partition.indices(nodes)
    E = np.zeros((partition.total, len(idx)))
    E[idx, np.arange(len(idx))] = 1.0
    return E


def sparsity_pattern(G: DiGraph, tau: float = 0.0) -> np.ndarray:
    """Matrix of :class:`Link` codes describing the admissible controllers.

    Entry ``(i, j)`` is local on the diagonal, delayed when ``j`` is a strict
    ancestor of ``i`` and zero otherwise.  With ``tau == 0`` the delayed
    entries are still reported as delayed; the delay is simply zero.
    """
    R = G.reachability()
    N = G.node_count
    P = np.full((N, N), Link.ZERO, dtype=int)
    P[R.T] = Link.DELAYED
    np.fill_diagonal(P, Link.LOCAL)
    return P


def pattern_product(P1: np.ndarray, P2: np.ndarray) -> np.ndarray:
    """Pattern of a product of structured matrices.

    A term is local only if both factors are local; any delayed factor makes
    it delayed; any zero factor removes it.  Terms combine by taking the
    strongest entry.
    """
    P1 = np.asarray(P1)
    P2 = np.asarray(P2)
    a = P1[:, :, None]
    b = P2[None, :, :]
    term = np.where((a == 0) | (b == 0), 0, np.where((a == 2) & (b == 2), 2, 1))
    return term.max(axis=1)


def pattern_sum(P1: np.ndarray, P2: np.ndarray) -> np.ndarray:
    return np.maximum(P1, P2)


def pattern_inverse(P: np.ndarray) -> np.ndarray:
    """Pattern of ``(I - K)^{-1}``: the closure of ``I + K + K^2 + ...``."""
    P = np.asarray(P)
    N = P.shape[0]
    acc = np.full((N, N), int(Link.ZERO))
    np.fill_diagonal(acc, int(Link.LOCAL))
    power = acc.copy()
    for _ in range(N + 1):
        power = pattern_product(power, P)
        new = pattern_sum(acc, power)
        if np.array_equal(new, acc):
            break
        acc = new
    return acc


def conforms(P: np.ndarray, pattern: np.ndarray) -> bool:
    """Whether pattern ``P`` is no richer than ``pattern`` entrywise.

    A local entry is allowed only where the pattern is local; a delayed entry
    is allowed where the pattern is delayed or local.
    """
    P = np.asarray(P)
    pattern = np.asarray(pattern)
    return bool(np.all(P <= pattern))


def condense_cycles(G: DiGraph) -> tuple[DiGraph, list[tuple[int, ...]]]:
    """Merge each strongly connected component into one node.

    Returns
    -------
    condensed : DiGraph
        Acyclic graph on the components.
    members : list of tuple of int
        ``members[c-1]`` lists the original nodes merged into node ``c``.
        Components are numbered by their smallest member.
    """
    adj = G.adjacency()
    _, labels = connected_components(csr_matrix(adj.astype(np.int8)), directed=True,
                                     connection="strong")
    groups: dict[int, list[int]] = {}
    for node, lab in enumerate(labels):
        groups.setdefault(int(lab), []).append(node + 1)
    members = sorted((tuple(sorted(v)) for v in groups.values()), key=lambda g: g[0])
    where = {node: c + 1 for c, grp in enumerate(members) for node in grp}
    edges = {(where[j], where[i]) for j, i in G.edges if where[j] != where[i]}
    return DiGraph(len(members), tuple(sorted(edges))), members


def is_multitree(G: DiGraph) -> bool:
    """True when at most one directed path joins any ordered pair of nodes."""
    if not G.is_acyclic():
        raise ValidationError("multitree detection requires an acyclic graph")
    N = G.node_count
    adj = G.adjacency().astype(np.int64)
    # count walks of every length; in a DAG walks are paths and lengths are < N
    total = np.zeros((N, N), dtype=np.int64)
    power = np.eye(N, dtype=np.int64)
    for _ in range(N):
        power = np.minimum(power @ adj, 2)
        total = np.minimum(total + power, 2)
    return bool(np.all(total <= 1))


__all__ = [
    "Link",
    "IndexSet",
    "BlockPartition",
    "DiGraph",
    "descendants",
    "ancestors",
    "strict_descendants",
    "strict_ancestors",
    "selector",
    "sparsity_pattern",
    "pattern_product",
    "pattern_sum",
    "pattern_inverse",
    "conforms",
    "condense_cycles",
    "is_multitree",
]
