"""Rational state-space systems and their algebra.

Everything here works on :class:`StateSpace`, a plain (A, B, C, D) quadruple
with optional block partitions of the inputs and outputs.  Realizations are
never reduced; equivalence is always judged on frequency responses.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
import scipy.linalg as sla

from .errors import AlgebraicLoopError, DimensionError, NotHurwitzError, NumericalError

HURWITZ_MARGIN = -1e-9




@dataclass(frozen=True)
class FrequencySample:
    """Value of a transfer matrix at one complex frequency."""

    s: complex
    value: np.ndarray


@dataclass(frozen=True, eq=False)
class StateSpace:
    """Continuous-time system ``G(s) = D + C (sI - A)^{-1} B``.

    Parameters
    ----------
    A, B, C, D : array_like
        Realization matrices.  Empty state dimension is allowed, in which
        case the system is static and equal to ``D``.
    row_partition, col_partition : sequence of int, optional
        Block sizes of the outputs and inputs.  They must sum to the output
        and input dimension respectively.
    """

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray
    row_partition: tuple[int, ...] | None = field(default=None)
    col_partition: tuple[int, ...] | None = field(default=None)

    def __post_init__(self):
        D = np.array(self.D, dtype=float)
        if D.ndim < 2:
            D = D.reshape(1, 1) if D.ndim == 0 else D.reshape(1, -1)
        r, q = D.shape
        A = np.array(self.A, dtype=float)
        n = A.shape[0] if A.ndim == 2 else (1 if A.size == 1 else 0)
        A = A.reshape(n, n) if A.size else np.zeros((n, n))
        B = np.array(self.B, dtype=float).reshape(n, q) if n and q else np.zeros((n, q))
        C = np.array(self.C, dtype=float).reshape(r, n) if n and r else np.zeros((r, n))
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "C", C)
        object.__setattr__(self, "D", D)
        for attr, total in (("row_partition", r), ("col_partition", q)):
            part = getattr(self, attr)
            if part is not None:
                part = tuple(int(k) for k in part)
                if sum(part) != total or any(k < 0 for k in part):
                    raise DimensionError(f"{attr} {part} does not sum to {total}")
                object.__setattr__(self, attr, part)

    @classmethod
    def checked(cls, A, B, C, D, row_partition=None, col_partition=None) -> "StateSpace":
        """Build a system after verifying that shapes agree exactly."""
        A, B, C, D = (np.atleast_2d(np.asarray(M, dtype=float)) for M in (A, B, C, D))
        n = A.shape[0]
        if A.shape != (n, n):
            raise DimensionError(f"A must be square, got {A.shape}")
        if B.shape[0] != n or C.shape[1] != n:
            raise DimensionError("B rows and C columns must match the state dimension")
        if D.shape != (C.shape[0], B.shape[1]):
            raise DimensionError(f"D must be {C.shape[0]}x{B.shape[1]}, got {D.shape}")
        return cls(A, B, C, D, row_partition, col_partition)

    @classmethod
    def static(cls, D) -> "StateSpace":
        D = np.atleast_2d(np.asarray(D, dtype=float))
        return cls(np.zeros((0, 0)), np.zeros((0, D.shape[1])), np.zeros((D.shape[0], 0)), D)

    @property
    def n_states(self) -> int:
        return self.A.shape[0]

    @property
    def n_inputs(self) -> int:
        return self.D.shape[1]

    @property
    def n_outputs(self) -> int:
        return self.D.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return self.D.shape

    def evaluate(self, s: complex) -> np.ndarray:
        """Transfer matrix at the complex frequency ``s``."""
        if self.n_states == 0:
            return self.D.astype(complex)
        M = s * np.eye(self.n_states) - self.A
        return self.D + self.C @ np.linalg.solve(M, self.B.astype(complex))

    __call__ = evaluate

    def freq_response(self, grid: Iterable[complex]) -> list[FrequencySample]:
        return [FrequencySample(complex(s), self.evaluate(s)) for s in grid]

    def with_partitions(self, rows=None, cols=None) -> "StateSpace":
        return StateSpace(self.A, self.B, self.C, self.D, rows, cols)

    def block(self, rows, cols) -> "StateSpace":
        """Subsystem from the given output rows to the given input columns."""
        rows = _index(rows)
        cols = _index(cols)
        return StateSpace(self.A, self.B[:, cols], self.C[rows, :], self.D[np.ix_(rows, cols)])

    def partition_block(self, i: int, j: int) -> "StateSpace":
        """Block ``(i, j)`` with respect to the stored partitions."""
        if self.row_partition is None or self.col_partition is None:
            raise DimensionError("system carries no partitions")
        return self.block(_part_slice(self.row_partition, i), _part_slice(self.col_partition, j))

    def __neg__(self):
        return StateSpace(self.A, self.B, -self.C, -self.D, self.row_partition, self.col_partition)

    def __add__(self, other):
        return parallel(self, _coerce(other, self.shape))

    def __radd__(self, other):
        return parallel(_coerce(other, self.shape), self)

    def __sub__(self, other):
        return parallel(self, -_coerce(other, self.shape))

    def __rsub__(self, other):
        return parallel(_coerce(other, self.shape), -self)

    def __matmul__(self, other):
        if isinstance(other, StateSpace):
            return series(other, self)
        other = np.atleast_2d(np.asarray(other, dtype=float))
        return StateSpace(self.A, self.B @ other, self.C, self.D @ other)

    def __rmatmul__(self, other):
        other = np.atleast_2d(np.asarray(other, dtype=float))
        return StateSpace(self.A, self.B, other @ self.C, other @ self.D)

    def __repr__(self):
        return f"StateSpace(states={self.n_states}, outputs={self.n_outputs}, inputs={self.n_inputs})"


def _index(sel) -> np.ndarray:
    if isinstance(sel, slice):
        raise TypeError("use explicit index arrays")
    return np.asarray(sel, dtype=int).reshape(-1)


def _part_slice(part: Sequence[int], i: int) -> np.ndarray:
    start = int(sum(part[:i]))
    return np.arange(start, start + part[i])


def _coerce(other, shape) -> StateSpace:
    if isinstance(other, StateSpace):
        return other
    D = np.asarray(other, dtype=float)
    if D.ndim == 0:
        D = D * np.ones(shape)
    return StateSpace.static(D)


def series(G1: StateSpace, G2: StateSpace) -> StateSpace:
    """Cascade ``G2 @ G1``: the output of ``G1`` drives ``G2``."""
    if G1.n_outputs != G2.n_inputs:
        raise DimensionError(f"cannot feed {G1.n_outputs} outputs into {G2.n_inputs} inputs")
    n1, n2 = G1.n_states, G2.n_states
    A = np.block([[G1.A, np.zeros((n1, n2))], [G2.B @ G1.C, G2.A]])
    B = np.vstack([G1.B, G2.B @ G1.D])
    C = np.hstack([G2.D @ G1.C, G2.C])
    return StateSpace(A, B, C, G2.D @ G1.D)


def parallel(G1: StateSpace, G2: StateSpace) -> StateSpace:
    """Sum ``G1 + G2`` of two systems with equal input/output sizes."""
    if G1.shape != G2.shape:
        raise DimensionError(f"shapes {G1.shape} and {G2.shape} differ")
    return StateSpace(sla.block_diag(G1.A, G2.A), np.vstack([G1.B, G2.B]),
                      np.hstack([G1.C, G2.C]), G1.D + G2.D,
                      G1.row_partition, G1.col_partition)


def append(*systems: StateSpace) -> StateSpace:
    """Block-diagonal stacking: independent inputs and outputs."""
    return StateSpace(sla.block_diag(*[G.A for G in systems]),
                      sla.block_diag(*[G.B for G in systems]),
                      sla.block_diag(*[G.C for G in systems]),
                      sla.block_diag(*[G.D for G in systems]),
                      tuple(G.n_outputs for G in systems),
                      tuple(G.n_inputs for G in systems))


def hstack(*systems: StateSpace) -> StateSpace:
    """``[G1, G2, ...]``: shared output, concatenated inputs."""
    r = {G.n_outputs for G in systems}
    if len(r) != 1:
        raise DimensionError("hstack needs equal output dimensions")
    return StateSpace(sla.block_diag(*[G.A for G in systems]),
                      sla.block_diag(*[G.B for G in systems]),
                      np.hstack([G.C for G in systems]),
                      np.hstack([G.D for G in systems]),
                      None, tuple(G.n_inputs for G in systems))


def vstack(*systems: StateSpace) -> StateSpace:
    """``[G1; G2; ...]``: shared input, concatenated outputs."""
    q = {G.n_inputs for G in systems}
    if len(q) != 1:
        raise DimensionError("vstack needs equal input dimensions")
    return StateSpace(sla.block_diag(*[G.A for G in systems]),
                      np.vstack([G.B for G in systems]),
                      sla.block_diag(*[G.C for G in systems]),
                      np.vstack([G.D for G in systems]),
                      tuple(G.n_outputs for G in systems), None)


def block_matrix(rows: Sequence[Sequence[StateSpace]]) -> StateSpace:
    """Assemble a block transfer matrix from a nested list of systems."""
    return vstack(*[hstack(*row) for row in rows])


def conj_transpose(G: StateSpace) -> StateSpace:
    """Para-Hermitian conjugate ``G~(s) = G(-conj s)^*``."""
    return StateSpace(-G.A.T, -G.C.T, G.B.T, G.D.T, G.col_partition, G.row_partition)


def _split(P: StateSpace, n_out2: int, n_in2: int):
    r1 = P.n_outputs - n_out2
    q1 = P.n_inputs - n_in2
    if r1 < 0 or q1 < 0:
        raise DimensionError("controller dimensions exceed plant dimensions")
    return r1, q1


def lft_lower(P: StateSpace, K: StateSpace) -> StateSpace:
    """Lower fractional transformation ``P11 + P12 K (I - P22 K)^{-1} P21``.

    The last ``K.n_outputs`` inputs and last ``K.n_inputs`` outputs of ``P``
    are closed through ``K``.
    """
    nu, ny = K.n_outputs, K.n_inputs
    r1, q1 = _split(P, ny, nu)
    B1, B2 = P.B[:, :q1], P.B[:, q1:]
    C1, C2 = P.C[:r1], P.C[r1:]
    D11, D12 = P.D[:r1, :q1], P.D[:r1, q1:]
    D21, D22 = P.D[r1:, :q1], P.D[r1:, q1:]
    M = np.eye(nu) - K.D @ D22
    if np.linalg.cond(M) > 1e12:
        raise AlgebraicLoopError("I - D_K D22 is singular")
    R = np.linalg.inv(M)
    # u = R (DK C2 xp + CK xk + DK D21 w)
    Ux = R @ K.D @ C2
    Uk = R @ K.C
    Uw = R @ K.D @ D21
    # y = C2 xp + D21 w + D22 u
    Yx, Yk, Yw = C2 + D22 @ Ux, D22 @ Uk, D21 + D22 @ Uw
    A = np.block([[P.A + B2 @ Ux, B2 @ Uk], [K.B @ Yx, K.A + K.B @ Yk]])
    B = np.vstack([B1 + B2 @ Uw, K.B @ Yw])
    C = np.hstack([C1 + D12 @ Ux, D12 @ Uk])
    D = D11 + D12 @ Uw
    return StateSpace(A, B, C, D)


def _swap_channels(P: StateSpace, n_out1: int, n_in1: int) -> StateSpace:
    ro = np.r_[n_out1:P.n_outputs, 0:n_out1]
    ci = np.r_[n_in1:P.n_inputs, 0:n_in1]
    return StateSpace(P.A, P.B[:, ci], P.C[ro], P.D[np.ix_(ro, ci)])


def lft_upper(P: StateSpace, K: StateSpace) -> StateSpace:
    """Upper fractional transformation ``P22 + P21 K (I - P11 K)^{-1} P12``.

    The first ``K.n_outputs`` inputs and first ``K.n_inputs`` outputs of
    ``P`` are closed through ``K``.
    """
    return lft_lower(_swap_channels(P, K.n_inputs, K.n_outputs), K)


def is_hurwitz(A, margin: float = HURWITZ_MARGIN) -> bool:
    A = np.atleast_2d(np.asarray(A, dtype=float))
    if A.size == 0:
        return True
    return bool(np.max(np.linalg.eigvals(A).real) < margin)


def spectral_abscissa(A) -> float:
    A = np.atleast_2d(np.asarray(A, dtype=float))
    if A.size == 0:
        return -np.inf
    return float(np.max(np.linalg.eigvals(A).real))


def lyapunov_solve(A, Q) -> np.ndarray:
    """Solve ``A^T W + W A + Q = 0`` for Hurwitz ``A``."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    if A.size == 0:
        return np.zeros((0, 0))
    if not is_hurwitz(A):
        raise NotHurwitzError(f"spectral abscissa {spectral_abscissa(A):.3e} is not negative")
    W = sla.solve_continuous_lyapunov(A.T, -Q)
    W = 0.5 * (W + W.T)
    res = np.linalg.norm(A.T @ W + W @ A + Q)
    # guard only against outright failure; well-conditioned solves land far below this
    if res > 1e-8 * (1 + np.linalg.norm(Q) + np.linalg.norm(A) * np.linalg.norm(W)):
        raise NumericalError(f"Lyapunov residual {res:.3e} too large")
    return W


def controllability_gramian(G: StateSpace) -> np.ndarray:
    return lyapunov_solve(G.A.T, G.B @ G.B.T)


def observability_gramian(G: StateSpace) -> np.ndarray:
    return lyapunov_solve(G.A, G.C.T @ G.C)


def h2_norm_sq(G: StateSpace) -> float:
    """Squared H2 norm of a strictly proper stable system."""
    if np.any(G.D != 0):
        raise NumericalError("nonzero feedthrough gives an infinite H2 norm")
    if G.n_states == 0:
        return 0.0
    Wc = controllability_gramian(G)
    Wo = observability_gramian(G)
    a = float(np.trace(G.C @ Wc @ G.C.T))
    b = float(np.trace(G.B.T @ Wo @ G.B))
    if abs(a - b) > 1e-6 * max(abs(a), abs(b), 1e-300):
        raise NumericalError(f"Gramian forms disagree: {a!r} vs {b!r}")
    return 0.5 * (a + b)


def default_grid(n: int = 50, lo: float = 1e-3, hi: float = 1e3, include_zero: bool = True) -> np.ndarray:
    """Imaginary-axis grid used for equivalence checks."""
    w = np.logspace(np.log10(lo), np.log10(hi), n)
    if include_zero:
        w = np.concatenate([[0.0], w])
    return 1j * w


def max_response_gap(F, G, grid=None) -> float:
    """Largest elementwise gap between two transfer functions over a grid."""
    grid = default_grid() if grid is None else grid
    return max(float(np.max(np.abs(np.asarray(F(s)) - np.asarray(G(s))), initial=0.0)) for s in grid)
