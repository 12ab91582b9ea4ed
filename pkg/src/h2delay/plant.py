"""Generalized plants.

:class:`GeneralizedPlant` is the usual four-block plant with no direct
feedthrough from disturbance to cost or from control to measurement.
:class:`Plant` adds the multi-agent structure: block-diagonal dynamics,
input and measurement maps, a communication graph and a delay.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np
import scipy.linalg as sla

from .errors import DimensionError, ValidationError
from .lti import StateSpace
from .topology import BlockPartition, DiGraph, IndexSet


def _mat(M, name) -> np.ndarray:
    M = np.asarray(M, dtype=float)
    if M.ndim == 0:
        M = M.reshape(1, 1)
    if M.ndim != 2:
        raise DimensionError(f"{name} must be a matrix")
    return M


@dataclass(frozen=True, eq=False)
class GeneralizedPlant:
    """Four-block plant ``[A | B1 B2; C1 | 0 D12; C2 | D21 0]``."""

    A: np.ndarray
    B1: np.ndarray
    B2: np.ndarray
    C1: np.ndarray
    D12: np.ndarray
    C2: np.ndarray
    D21: np.ndarray

    def __post_init__(self):
        for name in ("A", "B1", "B2", "C1", "D12", "C2", "D21"):
            object.__setattr__(self, name, _mat(getattr(self, name), name))
        n = self.A.shape[0]
        checks = [
            self.A.shape == (n, n),
            self.B1.shape[0] == n, self.B2.shape[0] == n,
            self.C1.shape[1] == n, self.C2.shape[1] == n,
            self.D12.shape == (self.C1.shape[0], self.B2.shape[1]),
            self.D21.shape == (self.C2.shape[0], self.B1.shape[1]),
        ]
        if not all(checks):
            raise DimensionError("inconsistent generalized plant dimensions")

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B2.shape[1]

    @property
    def p(self) -> int:
        return self.C2.shape[0]

    @property
    def nw(self) -> int:
        return self.B1.shape[1]

    @property
    def nz(self) -> int:
        return self.C1.shape[0]

    def to_statespace(self) -> StateSpace:
        B = np.hstack([self.B1, self.B2])
        C = np.vstack([self.C1, self.C2])
        D = np.block([[np.zeros((self.nz, self.nw)), self.D12],
                      [self.D21, np.zeros((self.p, self.m))]])
        return StateSpace(self.A, B, C, D, (self.nz, self.p), (self.nw, self.m))

    def with_inputs(self, B2, D12) -> "GeneralizedPlant":
        return replace(self, B2=B2, D12=D12)


def _blockdiag_check(M: np.ndarray, rows: BlockPartition, cols: BlockPartition, name: str):
    ro, co = rows.offsets, cols.offsets
    mask = np.ones(M.shape, dtype=bool)
    for k in range(len(rows)):
        mask[ro[k]:ro[k + 1], co[k]:co[k + 1]] = False
    if np.any(M[mask] != 0):
        raise ValidationError(f"{name} is not block diagonal")


@dataclass(frozen=True, eq=False)
class Plant:
    """Multi-agent plant with decoupled dynamics and coupled cost.

    Parameters
    ----------
    A, B1, B2, C2, D21 : ndarray
        Block-diagonal matrices conforming to the per-agent partitions.
    C1, D12 : ndarray
        Dense cost matrices.
    n_parts, m_parts, p_parts, w_parts : tuple of int
        Per-agent state, input, measurement and disturbance dimensions.
    graph : DiGraph
        Communication graph.
    tau : float
        Processing delay of every transmission.
    """

    A: np.ndarray
    B1: np.ndarray
    B2: np.ndarray
    C1: np.ndarray
    D12: np.ndarray
    C2: np.ndarray
    D21: np.ndarray
    n_parts: BlockPartition
    m_parts: BlockPartition
    p_parts: BlockPartition
    w_parts: BlockPartition
    graph: DiGraph
    tau: float = 0.0

    def __post_init__(self):
        for name in ("A", "B1", "B2", "C1", "D12", "C2", "D21"):
            object.__setattr__(self, name, _mat(getattr(self, name), name))
        for name in ("n_parts", "m_parts", "p_parts", "w_parts"):
            v = getattr(self, name)
            if not isinstance(v, BlockPartition):
                object.__setattr__(self, name, BlockPartition(tuple(v)))
        N = len(self.n_parts)
        if not (len(self.m_parts) == len(self.p_parts) == len(self.w_parts) == N):
            raise DimensionError("all partitions need one block per agent")
        if self.graph.node_count != N:
            raise ValidationError(f"graph has {self.graph.node_count} nodes but there are {N} agents")
        if self.tau < 0:
            raise ValidationError("tau must be nonnegative")
        n, m, p, nw = (P.total for P in (self.n_parts, self.m_parts, self.p_parts, self.w_parts))
        nz = self.C1.shape[0]
        expected = {"A": (n, n), "B1": (n, nw), "B2": (n, m), "C1": (nz, n), "D12": (nz, m),
                    "C2": (p, n), "D21": (p, nw)}
        for name, shape in expected.items():
            if getattr(self, name).shape != shape:
                raise DimensionError(f"{name} has shape {getattr(self, name).shape}, expected {shape}")
        _blockdiag_check(self.A, self.n_parts, self.n_parts, "A")
        _blockdiag_check(self.B1, self.n_parts, self.w_parts, "B1")
        _blockdiag_check(self.B2, self.n_parts, self.m_parts, "B2")
        _blockdiag_check(self.C2, self.p_parts, self.n_parts, "C2")
        _blockdiag_check(self.D21, self.p_parts, self.w_parts, "D21")

    @classmethod
    def from_blocks(cls, A: Sequence, B1: Sequence, B2: Sequence, C2: Sequence, D21: Sequence,
                    C1, D12, graph: DiGraph | None = None, tau: float = 0.0) -> "Plant":
        """Build from per-agent blocks ``A_ii, B1_ii, ...`` plus dense cost matrices."""
        A = [_mat(a, "A_ii") for a in A]
        B1 = [_mat(b, "B1_ii") for b in B1]
        B2 = [_mat(b, "B2_ii") for b in B2]
        C2 = [_mat(c, "C2_ii") for c in C2]
        D21 = [_mat(d, "D21_ii") for d in D21]
        N = len(A)
        if not (len(B1) == len(B2) == len(C2) == len(D21) == N):
            raise DimensionError("every agent needs A, B1, B2, C2 and D21 blocks")
        graph = graph if graph is not None else DiGraph.empty(N)
        return cls(sla.block_diag(*A), sla.block_diag(*B1), sla.block_diag(*B2), _mat(C1, "C1"),
                   _mat(D12, "D12"), sla.block_diag(*C2), sla.block_diag(*D21),
                   BlockPartition(tuple(a.shape[0] for a in A)),
                   BlockPartition(tuple(b.shape[1] for b in B2)),
                   BlockPartition(tuple(c.shape[0] for c in C2)),
                   BlockPartition(tuple(b.shape[1] for b in B1)), graph, tau)

    # dimensions -------------------------------------------------------------

    @property
    def N(self) -> int:
        return len(self.n_parts)

    @property
    def n(self) -> int:
        return self.n_parts.total

    @property
    def m(self) -> int:
        return self.m_parts.total

    @property
    def p(self) -> int:
        return self.p_parts.total

    @property
    def nw(self) -> int:
        return self.w_parts.total

    @property
    def nz(self) -> int:
        return self.C1.shape[0]

    # structure --------------------------------------------------------------

    def with_graph(self, graph: DiGraph) -> "Plant":
        return replace(self, graph=graph)

    def with_tau(self, tau: float) -> "Plant":
        return replace(self, tau=float(tau))

    def block(self, name: str, i: int, j: int | None = None) -> np.ndarray:
        """Diagonal (or ``(i, j)``) block of a structured matrix, 1-based."""
        parts = {"A": ("n_parts", "n_parts"), "B1": ("n_parts", "w_parts"),
                 "B2": ("n_parts", "m_parts"), "C2": ("p_parts", "n_parts"),
                 "D21": ("p_parts", "w_parts")}[name]
        j = i if j is None else j
        r = getattr(self, parts[0]).indices([i])
        c = getattr(self, parts[1]).indices([j])
        return getattr(self, name)[np.ix_(r, c)]

    def descendants(self, i: int) -> IndexSet:
        return self.graph.descendants(i)

    def generalized(self) -> GeneralizedPlant:
        return GeneralizedPlant(self.A, self.B1, self.B2, self.C1, self.D12, self.C2, self.D21)

    def to_statespace(self) -> StateSpace:
        return self.generalized().to_statespace()

    def subplant(self, i: int, order: Sequence[int] | None = None) -> GeneralizedPlant:
        """Plant seen by agent ``i`` controlling ``order`` with its own measurement.

        ``order`` defaults to the descendants of ``i`` (anchor first).  The
        disturbance is agent ``i``'s own noise and the measurement is ``y_i``.
        """
        order = list(self.descendants(i) if order is None else order)
        if order[0] != i:
            raise ValidationError("the anchor agent must come first")
        xi = self.n_parts.indices(order)
        ui = self.m_parts.indices(order)
        wi = self.w_parts.indices([i])
        yi = self.p_parts.indices([i])
        return GeneralizedPlant(
            self.A[np.ix_(xi, xi)],
            self.B1[np.ix_(xi, wi)],
            self.B2[np.ix_(xi, ui)],
            self.C1[:, xi],
            self.D12[:, ui],
            self.C2[np.ix_(yi, xi)],
            self.D21[np.ix_(yi, wi)],
        )
