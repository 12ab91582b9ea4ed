"""Delays, finite impulse response blocks and delayed systems.

The central object is :class:`DelayedSystem`, a linear system with a single
delay ``tau`` acting on its state and input::

    x'(t) = A0 x(t) + A1 x(t - tau) + B0 u(t) + B1 u(t - tau)
    y(t)  = C0 x(t) + C1 x(t - tau) + D0 u(t) + D1 u(t - tau)

Rational systems, pure delays, FIR blocks and all interconnections of them
that never stack two delays in series fit this form.  Systems are usually
assembled with :class:`SignalBuilder`, which lets one write the signal
equations of a block diagram directly.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
import scipy.linalg as sla

from .errors import AlgebraicLoopError, DimensionError, ValidationError
from .lti import FrequencySample, StateSpace
from .topology import BlockPartition


# ----------------------------------------------------------------------------
# FIR blocks
# ----------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class FirBlock:
    """FIR system with impulse response ``C exp(A (t - tau)) B`` on ``[0, tau]``.

    Its transfer function is ``C (sI - A)^{-1} (exp(-A tau) - exp(-s tau)) B``,
    which is entire in ``s``.
    """

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    tau: float

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        B = np.atleast_2d(np.asarray(self.B, dtype=float))
        C = np.atleast_2d(np.asarray(self.C, dtype=float))
        k = A.shape[0]
        if A.shape != (k, k) or B.shape[0] != k or C.shape[1] != k:
            raise DimensionError("inconsistent FIR realization")
        if self.tau < 0:
            raise ValidationError("FIR support length must be nonnegative")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "C", C)
        object.__setattr__(self, "tau", float(self.tau))

    @property
    def shape(self) -> tuple[int, int]:
        return self.C.shape[0], self.B.shape[1]

    @property
    def n_states(self) -> int:
        return self.A.shape[0]

    @property
    def input_matrix(self) -> np.ndarray:
        """``exp(-A tau) B``, the undelayed input matrix of the realization."""
        return sla.expm(-self.A * self.tau) @ self.B

    def evaluate(self, s: complex) -> np.ndarray:
        return fir_eval(self, s)

    __call__ = evaluate

    def impulse(self, t: float) -> np.ndarray:
        return fir_impulse(self, t)

    def scaled(self, left=None, right=None) -> "FirBlock":
        """``left @ F @ right`` as a new FIR block."""
        C = self.C if left is None else np.atleast_2d(left) @ self.C
        B = self.B if right is None else self.B @ np.atleast_2d(right)
        return FirBlock(self.A, B, C, self.tau)


def pi_tau(G: StateSpace, tau: float) -> FirBlock:
    """Completion of ``G(s) exp(-s tau)`` into an FIR block.

    The result is the unique FIR system such that adding ``G exp(-s tau)``
    gives a rational transfer function, namely ``C (sI-A)^{-1} exp(-A tau) B``.
    """
    if np.any(G.D != 0):
        raise ValidationError("the completion operator needs a strictly proper system")
    if tau < 0:
        raise ValidationError("tau must be nonnegative")
    return FirBlock(G.A, G.B, G.C, tau)


def _van_loan_fir(F: FirBlock, s: complex) -> np.ndarray:
    # integral of exp((A - sI) t) over [0, tau] from one augmented exponential
    k = F.n_states
    M = np.zeros((2 * k, 2 * k), dtype=complex)
    M[:k, :k] = (F.A - s * np.eye(k)) * F.tau
    M[:k, k:] = np.eye(k) * F.tau
    integral = sla.expm(M)[:k, k:]
    return F.C @ sla.expm(-F.A * F.tau) @ integral @ F.B


def fir_eval(F: FirBlock, s: complex) -> np.ndarray:
    """Transfer matrix of an FIR block at ``s``.

    Uses the resolvent formula away from eigenvalues of ``A`` and an
    augmented matrix exponential near them, so the value stays finite.
    """
    r, q = F.shape
    if F.tau == 0 or F.n_states == 0:
        return np.zeros((r, q), dtype=complex)
    k = F.n_states
    M = s * np.eye(k) - F.A
    if np.linalg.cond(M) < 1e6:
        rhs = (sla.expm(-F.A * F.tau) - np.exp(-s * F.tau) * np.eye(k)) @ F.B
        return F.C @ np.linalg.solve(M, rhs.astype(complex))
    return _van_loan_fir(F, s)


def fir_impulse(F: FirBlock, t: float) -> np.ndarray:
    """Impulse response at time ``t`` (zero outside ``[0, tau]``)."""
    if t < 0 or t > F.tau or F.tau == 0:
        return np.zeros(F.shape)
    return F.C @ sla.expm(F.A * (t - F.tau)) @ F.B


def fir_h2_sq(F: FirBlock) -> float:
    """Integral of ``trace(h(t)^T h(t))`` over the support."""
    if F.tau == 0 or F.n_states == 0:
        return 0.0
    k = F.n_states
    # h(t) = C exp(-A theta) B with theta = tau - t; integrate the Gramian in theta
    Fm = -F.A
    M = np.block([[-Fm.T, F.C.T @ F.C], [np.zeros((k, k)), Fm]]) * F.tau
    E = sla.expm(M)
    W = E[k:, k:].T @ E[:k, k:]
    W = 0.5 * (W + W.T)
    return max(float(np.trace(F.B.T @ W @ F.B)), 0.0)


# ----------------------------------------------------------------------------
# Adobe delays
# ----------------------------------------------------------------------------

@dataclass(frozen=True)
class AdobeDelay:
    """``blkdiag(I, exp(-s tau) I)``: first block undelayed, the rest delayed.

    Parameters
    ----------
    partition : BlockPartition
        Input block sizes in anchor-first order.
    tau : float
        Delay applied to every block but the first.
    """

    partition: BlockPartition
    tau: float

    @property
    def n_undelayed(self) -> int:
        return self.partition.sizes[0]

    @property
    def n_delayed(self) -> int:
        return self.partition.total - self.partition.sizes[0]

    def evaluate(self, s: complex) -> np.ndarray:
        d = np.ones(self.partition.total, dtype=complex)
        d[self.n_undelayed:] = np.exp(-s * self.tau)
        return np.diag(d)

    __call__ = evaluate


# ----------------------------------------------------------------------------
# Delayed systems
# ----------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class FirTag:
    """Bookkeeping for FIR states inside a :class:`DelayedSystem`.

    The states ``offset : offset + A.shape[0]`` obey
    ``q' = A q + exp(-A tau) B v(t) - B v(t - tau)`` with input
    ``v = Kx x + Ku u``.  A simulator can recompute them exactly from the
    input history instead of integrating their unstable dynamics.
    """

    offset: int
    A: np.ndarray
    B: np.ndarray
    Kx: np.ndarray
    Ku: np.ndarray

    @property
    def slice(self) -> slice:
        return slice(self.offset, self.offset + self.A.shape[0])


def _zeros(r, c):
    return np.zeros((r, c))


@dataclass(frozen=True, eq=False)
class DelayedSystem:
    """Linear system with one delay ``tau`` on its state and input.

    Attributes
    ----------
    A0, A1, B0, B1, C0, C1, D0, D1 : ndarray
        Undelayed (``*0``) and delayed (``*1``) coefficient matrices.
    tau : float
        The delay.
    fir_tags : tuple of FirTag
        FIR substates, used only by the simulator.
    """

    A0: np.ndarray
    A1: np.ndarray
    B0: np.ndarray
    B1: np.ndarray
    C0: np.ndarray
    C1: np.ndarray
    D0: np.ndarray
    D1: np.ndarray
    tau: float
    fir_tags: tuple = field(default=())

    def __post_init__(self):
        n = self.A0.shape[0]
        q = self.D0.shape[1]
        r = self.D0.shape[0]
        for name, shape in (("A1", (n, n)), ("B0", (n, q)), ("B1", (n, q)), ("C0", (r, n)),
                            ("C1", (r, n)), ("D1", (r, q))):
            M = np.asarray(getattr(self, name), dtype=float).reshape(shape)
            object.__setattr__(self, name, M)
        if self.tau < 0:
            raise ValidationError("tau must be nonnegative")

    # construction -----------------------------------------------------------

    @classmethod
    def from_statespace(cls, G: StateSpace, tau: float = 0.0) -> "DelayedSystem":
        n, q, r = G.n_states, G.n_inputs, G.n_outputs
        return cls(G.A, _zeros(n, n), G.B, _zeros(n, q), G.C, _zeros(r, n), G.D, _zeros(r, q), tau)

    @classmethod
    def pure_delay(cls, size: int, tau: float) -> "DelayedSystem":
        return cls(_zeros(0, 0), _zeros(0, 0), _zeros(0, size), _zeros(0, size), _zeros(size, 0),
                   _zeros(size, 0), _zeros(size, size), np.eye(size), tau)

    @classmethod
    def from_fir(cls, F: FirBlock) -> "DelayedSystem":
        b = SignalBuilder(F.tau)
        u = b.input(F.shape[1])
        return b.build([u], [b.fir(F, u)])

    @classmethod
    def from_parts(cls, tau: float, rational: StateSpace | None = None,
                   fir_terms: Sequence[FirBlock] = (),
                   delay_taps: Sequence[StateSpace] = ()) -> "DelayedSystem":
        """Sum of a rational part, FIR terms and delayed rational taps."""
        shapes = [G.shape for G in ([rational] if rational else [])] + \
                 [F.shape for F in fir_terms] + [G.shape for G in delay_taps]
        if not shapes or len(set(shapes)) != 1:
            raise DimensionError("parts must share one nonempty shape")
        r, q = shapes[0]
        b = SignalBuilder(tau)
        u = b.input(q)
        y = b.zeros(r)
        if rational is not None:
            y = y + b.lti(rational, u)
        for F in fir_terms:
            y = y + b.fir(F, u)
        for G in delay_taps:
            y = y + b.lti(G, b.delay(u))
        return b.build([u], [y])

    # shape --------------------------------------------------------------------

    @property
    def n_states(self) -> int:
        return self.A0.shape[0]

    @property
    def n_inputs(self) -> int:
        return self.D0.shape[1]

    @property
    def n_outputs(self) -> int:
        return self.D0.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return self.D0.shape

    @property
    def has_delay(self) -> bool:
        return self.tau > 0 and any(np.any(M != 0) for M in (self.A1, self.B1, self.C1, self.D1))

    # evaluation ---------------------------------------------------------------

    def evaluate(self, s: complex) -> np.ndarray:
        e = np.exp(-s * self.tau)
        val = self.D0 + e * self.D1
        if self.n_states:
            M = s * np.eye(self.n_states) - self.A0 - e * self.A1
            val = val + (self.C0 + e * self.C1) @ np.linalg.solve(M, (self.B0 + e * self.B1).astype(complex))
        return np.asarray(val, dtype=complex)

    __call__ = evaluate

    def freq_response(self, grid: Iterable[complex]) -> list[FrequencySample]:
        return [FrequencySample(complex(s), self.evaluate(s)) for s in grid]

    def to_statespace(self) -> StateSpace:
        """Rational equivalent; only valid when the system has no delay."""
        if self.has_delay:
            raise ValidationError("system contains a nonzero delay")
        return StateSpace(self.A0 + self.A1, self.B0 + self.B1, self.C0 + self.C1, self.D0 + self.D1)

    def rational_part_matrix(self) -> np.ndarray:
        """State matrix with delayed states dropped; used for step-size rules."""
        return self.A0

    def select(self, rows=None, cols=None) -> "DelayedSystem":
        rows = np.arange(self.n_outputs) if rows is None else np.asarray(rows, dtype=int)
        cols = np.arange(self.n_inputs) if cols is None else np.asarray(cols, dtype=int)
        tags = tuple(FirTag(t.offset, t.A, t.B, t.Kx, t.Ku[:, cols]) for t in self.fir_tags)
        return DelayedSystem(self.A0, self.A1, self.B0[:, cols], self.B1[:, cols],
                             self.C0[rows], self.C1[rows], self.D0[np.ix_(rows, cols)],
                             self.D1[np.ix_(rows, cols)], self.tau, tags)

    def __neg__(self):
        return DelayedSystem(self.A0, self.A1, self.B0, self.B1, -self.C0, -self.C1, -self.D0,
                             -self.D1, self.tau, self.fir_tags)

    def __rmatmul__(self, M):
        M = np.atleast_2d(np.asarray(M, dtype=float))
        return DelayedSystem(self.A0, self.A1, self.B0, self.B1, M @ self.C0, M @ self.C1,
                             M @ self.D0, M @ self.D1, self.tau, self.fir_tags)

    def __matmul__(self, M):
        M = np.atleast_2d(np.asarray(M, dtype=float))
        tags = tuple(FirTag(t.offset, t.A, t.B, t.Kx, t.Ku @ M) for t in self.fir_tags)
        return DelayedSystem(self.A0, self.A1, self.B0 @ M, self.B1 @ M, self.C0, self.C1,
                             self.D0 @ M, self.D1 @ M, self.tau, tags)

    def __repr__(self):
        return (f"DelayedSystem(states={self.n_states}, outputs={self.n_outputs}, "
                f"inputs={self.n_inputs}, tau={self.tau})")


# ----------------------------------------------------------------------------
# Signal algebra for block diagrams
# ----------------------------------------------------------------------------

class Signal:
    """Vector signal expressed linearly in states, inputs and their delays.

    Instances are created by a :class:`SignalBuilder`; they support ``+``,
    ``-``, left multiplication by matrices and row selection.
    """

    __slots__ = ("builder", "dim", "terms")
    # make ``ndarray @ signal`` dispatch to Signal.__rmatmul__
    __array_ufunc__ = None

    def __init__(self, builder: "SignalBuilder", dim: int, terms: dict | None = None):
        self.builder = builder
        self.dim = int(dim)
        self.terms = terms or {}

    def _combine(self, other: "Signal", sign: float) -> "Signal":
        if not isinstance(other, Signal):
            raise TypeError("signals combine only with signals")
        if other.builder is not self.builder:
            raise ValidationError("signals belong to different builders")
        if other.dim != self.dim:
            raise DimensionError(f"signal sizes {self.dim} and {other.dim} differ")
        terms = dict(self.terms)
        for k, M in other.terms.items():
            terms[k] = terms[k] + sign * M if k in terms else sign * M
        return Signal(self.builder, self.dim, terms)

    def __add__(self, other):
        return self._combine(other, 1.0)

    def __sub__(self, other):
        return self._combine(other, -1.0)

    def __neg__(self):
        return Signal(self.builder, self.dim, {k: -M for k, M in self.terms.items()})

    def __rmatmul__(self, M):
        M = np.atleast_2d(np.asarray(M, dtype=float))
        if M.shape[1] != self.dim:
            raise DimensionError(f"cannot apply a {M.shape} matrix to a signal of size {self.dim}")
        return Signal(self.builder, M.shape[0], {k: M @ C for k, C in self.terms.items()})

    def __getitem__(self, rows):
        rows = np.arange(self.dim)[rows] if isinstance(rows, slice) else np.asarray(rows, dtype=int).reshape(-1)
        return Signal(self.builder, len(rows), {k: C[rows] for k, C in self.terms.items()})

    @property
    def is_delayed(self) -> bool:
        return any(k[0] in ("xd", "ud") and np.any(C != 0) for k, C in self.terms.items())

    def __repr__(self):
        return f"Signal(dim={self.dim}, terms={sorted(self.terms)})"


def vstack_signals(*signals: Signal) -> Signal:
    if not signals:
        raise ValueError("nothing to stack")
    b = signals[0].builder
    dim = sum(s.dim for s in signals)
    out = b.zeros(dim)
    row = 0
    for s in signals:
        E = np.zeros((dim, s.dim))
        E[row:row + s.dim] = np.eye(s.dim)
        out = out + E @ s
        row += s.dim
    return out


class SignalBuilder:
    """Assemble a :class:`DelayedSystem` from signal equations.

    Example
    -------
    >>> b = SignalBuilder(tau=1.0)
    >>> u = b.input(1)
    >>> x = b.state(1)
    >>> b.set_derivative(x, -1.0 * np.eye(1) @ x + b.delay(u))
    >>> G = b.build([u], [x])          # exp(-s) / (s + 1)
    """

    def __init__(self, tau: float):
        if tau < 0:
            raise ValidationError("tau must be nonnegative")
        self.tau = float(tau)
        self._state_dims: list[int] = []
        self._input_dims: list[int] = []
        self._deriv: dict[int, Signal] = {}
        # (state id, offset inside that state block, A, B, input signal)
        self._firs: list[tuple[int, int, np.ndarray, np.ndarray, Signal]] = []

    # primitives -------------------------------------------------------------

    def zeros(self, dim: int) -> Signal:
        return Signal(self, dim, {})

    def input(self, dim: int) -> Signal:
        self._input_dims.append(int(dim))
        k = len(self._input_dims) - 1
        return Signal(self, dim, {("u", k): np.eye(dim)})

    def state(self, dim: int) -> Signal:
        self._state_dims.append(int(dim))
        k = len(self._state_dims) - 1
        return Signal(self, dim, {("x", k): np.eye(dim)})

    def _state_id(self, x: Signal) -> int:
        keys = list(x.terms)
        if len(keys) != 1 or keys[0][0] != "x" or not np.array_equal(x.terms[keys[0]], np.eye(x.dim)):
            raise ValidationError("derivatives can only be assigned to raw state signals")
        return keys[0][1]

    def set_derivative(self, x: Signal, dx: Signal) -> None:
        k = self._state_id(x)
        if dx.dim != x.dim:
            raise DimensionError("derivative has the wrong size")
        if k in self._deriv:
            raise ValidationError("derivative already assigned")
        self._deriv[k] = dx

    def delay(self, sig: Signal) -> Signal:
        """``sig(t - tau)``; refuses to stack two delays."""
        if self.tau == 0:
            return sig
        if sig.is_delayed:
            raise ValidationError("a delayed signal cannot be delayed again")
        terms = {}
        for (kind, k), C in sig.terms.items():
            if kind in ("xd", "ud"):
                continue  # only zero coefficients can remain here
            terms[("xd" if kind == "x" else "ud", k)] = C
        return Signal(self, sig.dim, terms)

    # composite blocks -------------------------------------------------------

    def lti(self, G: StateSpace, u: Signal) -> Signal:
        """Output of the rational system ``G`` driven by ``u``."""
        if u.dim != G.n_inputs:
            raise DimensionError("input size does not match the system")
        if G.n_states == 0:
            return G.D @ u
        x = self.state(G.n_states)
        self.set_derivative(x, G.A @ x + G.B @ u)
        return G.C @ x + G.D @ u

    def fir(self, F: FirBlock, u: Signal) -> Signal:
        """Output of the FIR block ``F`` driven by ``u``."""
        r, q = F.shape
        if u.dim != q:
            raise DimensionError("input size does not match the FIR block")
        if self.tau == 0 or F.tau == 0 or F.n_states == 0:
            return self.zeros(r)
        if abs(F.tau - self.tau) > 1e-12 * max(1.0, self.tau):
            raise ValidationError("FIR support must equal the builder delay")
        q_state = self.state(F.n_states)
        k = self._state_id(q_state)
        self.set_derivative(q_state, F.A @ q_state + F.input_matrix @ u - F.B @ self.delay(u))
        self._firs.append((k, 0, F.A, F.B, u))
        return F.C @ q_state

    def subsystem(self, G: DelayedSystem, u: Signal) -> Signal:
        """Output of an existing delayed system driven by ``u``."""
        if G.tau != self.tau and G.has_delay:
            raise ValidationError("delays differ")
        if u.dim != G.n_inputs:
            raise DimensionError("input size does not match the system")
        ud = self.delay(u) if (np.any(G.B1 != 0) or np.any(G.D1 != 0)) else self.zeros(u.dim)
        if G.n_states == 0:
            return G.D0 @ u + G.D1 @ ud
        x = self.state(G.n_states)
        k = self._state_id(x)
        xd = self.delay(x)
        self.set_derivative(x, G.A0 @ x + G.A1 @ xd + G.B0 @ u + G.B1 @ ud)
        for t in G.fir_tags:
            # the tag input is Kx (own states) + Ku (own input)
            self._firs.append((k, t.offset, t.A, t.B, t.Kx @ x + t.Ku @ u))
        return G.C0 @ x + G.C1 @ xd + G.D0 @ u + G.D1 @ ud

    # assembly ---------------------------------------------------------------

    def build(self, inputs: Sequence[Signal], outputs: Sequence[Signal]) -> DelayedSystem:
        """Freeze the diagram into a :class:`DelayedSystem`.

        ``inputs`` must be raw input signals (in the desired order); every
        input created with :meth:`input` has to appear.  ``outputs`` are
        stacked vertically.
        """
        in_ids = []
        for u in inputs:
            keys = list(u.terms)
            if len(keys) != 1 or keys[0][0] != "u":
                raise ValidationError("build inputs must be raw input signals")
            in_ids.append(keys[0][1])
        if sorted(in_ids) != list(range(len(self._input_dims))):
            raise ValidationError("every declared input must be listed exactly once")
        missing = [k for k in range(len(self._state_dims)) if k not in self._deriv]
        if missing:
            raise ValidationError(f"states without derivative: {missing}")

        s_off = np.concatenate([[0], np.cumsum(self._state_dims)]).astype(int)
        u_off = {}
        pos = 0
        for k in in_ids:
            u_off[k] = pos
            pos += self._input_dims[k]
        n, q = int(s_off[-1]), pos

        def place(sig: Signal):
            X0, X1 = np.zeros((sig.dim, n)), np.zeros((sig.dim, n))
            U0, U1 = np.zeros((sig.dim, q)), np.zeros((sig.dim, q))
            for (kind, k), C in sig.terms.items():
                if kind in ("x", "xd"):
                    tgt = X0 if kind == "x" else X1
                    tgt[:, s_off[k]:s_off[k + 1]] += C
                else:
                    tgt = U0 if kind == "u" else U1
                    tgt[:, u_off[k]:u_off[k] + self._input_dims[k]] += C
            return X0, X1, U0, U1

        A0, A1, B0, B1 = np.zeros((n, n)), np.zeros((n, n)), np.zeros((n, q)), np.zeros((n, q))
        for k, dx in self._deriv.items():
            a0, a1, b0, b1 = place(dx)
            sl = slice(s_off[k], s_off[k + 1])
            A0[sl], A1[sl], B0[sl], B1[sl] = a0, a1, b0, b1
        r = sum(y.dim for y in outputs)
        y = vstack_signals(*outputs) if outputs else self.zeros(0)
        C0, C1, D0, D1 = place(y) if r else (np.zeros((0, n)), np.zeros((0, n)),
                                            np.zeros((0, q)), np.zeros((0, q)))
        tags = []
        for k, local, Af, Bf, u in self._firs:
            kx, kxd, ku, kud = place(u)
            if np.any(kxd != 0) or np.any(kud != 0):
                raise ValidationError("FIR inputs must not contain delayed terms")
            tags.append(FirTag(int(s_off[k]) + local, Af, Bf, kx, ku))
        return DelayedSystem(A0, A1, B0, B1, C0, C1, D0, D1, self.tau, tuple(tags))


# ----------------------------------------------------------------------------
# Interconnections of delayed systems
# ----------------------------------------------------------------------------

def _as_delayed(G, tau: float) -> DelayedSystem:
    return G if isinstance(G, DelayedSystem) else DelayedSystem.from_statespace(G, tau)


def delayed_series(G1, G2) -> DelayedSystem:
    """``G2 @ G1`` for delayed or rational systems."""
    tau = max(getattr(G1, "tau", 0.0), getattr(G2, "tau", 0.0))
    b = SignalBuilder(tau)
    u = b.input(G1.n_inputs if isinstance(G1, DelayedSystem) else G1.n_inputs)
    y1 = b.subsystem(_as_delayed(G1, tau), u)
    y2 = b.subsystem(_as_delayed(G2, tau), y1)
    return b.build([u], [y2])


def delayed_lft_lower(P, K) -> DelayedSystem:
    """``F_l(P, K)`` for a rational plant ``P`` and a delayed controller ``K``.

    Only loops without feedthrough are supported: either the plant's lower
    right block or the controller must be strictly proper.
    """
    Kd = _as_delayed(K, 0.0)
    tau = Kd.tau
    nu, ny = Kd.n_outputs, Kd.n_inputs
    Pd = _as_delayed(P, tau)
    r1, q1 = Pd.n_outputs - ny, Pd.n_inputs - nu
    D22 = np.abs(Pd.D0[r1:, q1:]).sum() + np.abs(Pd.D1[r1:, q1:]).sum()
    DK = np.abs(Kd.D0).sum() + np.abs(Kd.D1).sum()
    if D22 > 0 and DK > 0:
        raise AlgebraicLoopError("both loop elements have feedthrough")
    b = SignalBuilder(tau)
    w = b.input(q1)
    if DK == 0:
        xk = b.state(Kd.n_states)
        xkd = b.delay(xk)
        u = Kd.C0 @ xk + Kd.C1 @ xkd
        zy = b.subsystem(Pd, vstack_signals(w, u))
        y = zy[r1:]
        b.set_derivative(xk, Kd.A0 @ xk + Kd.A1 @ xkd + Kd.B0 @ y + Kd.B1 @ b.delay(y))
        _retag(b, Kd, xk, y)
        return b.build([w], [zy[:r1]])
    xp = b.state(Pd.n_states)
    xpd = b.delay(xp)
    y = Pd.C0[r1:] @ xp + Pd.C1[r1:] @ xpd + Pd.D0[r1:, :q1] @ w + Pd.D1[r1:, :q1] @ b.delay(w)
    u = b.subsystem(Kd, y)
    ud = b.delay(u) if np.any(Pd.B1[:, q1:] != 0) or np.any(Pd.D1[:r1, q1:] != 0) else b.zeros(nu)
    wd = b.delay(w)
    b.set_derivative(xp, Pd.A0 @ xp + Pd.A1 @ xpd + Pd.B0[:, :q1] @ w + Pd.B1[:, :q1] @ wd
                     + Pd.B0[:, q1:] @ u + Pd.B1[:, q1:] @ ud)
    z = Pd.C0[:r1] @ xp + Pd.C1[:r1] @ xpd + Pd.D0[:r1, :q1] @ w + Pd.D1[:r1, :q1] @ wd \
        + Pd.D0[:r1, q1:] @ u + Pd.D1[:r1, q1:] @ ud
    return b.build([w], [z])


def _retag(b: SignalBuilder, G: DelayedSystem, x: Signal, u: Signal) -> None:
    # register FIR substates of a system whose states were created by hand
    k = b._state_id(x)
    for t in G.fir_tags:
        b._firs.append((k, t.offset, t.A, t.B, t.Kx @ x + t.Ku @ u))


# ----------------------------------------------------------------------------
# Loop-shifting compensators
# ----------------------------------------------------------------------------

def assemble_pi_u(fir: FirBlock | None, n_undelayed: int, n_delayed: int, tau: float,
                  tap: np.ndarray | None = None) -> DelayedSystem:
    """``[[I, Pi~_u], [0, I]]`` where ``Pi~_u = fir + tap exp(-s tau)``.

    ``fir`` maps the delayed channels to the undelayed ones; ``tap`` is an
    optional static gain on the delayed input.
    """
    m0, mt = int(n_undelayed), int(n_delayed)
    b = SignalBuilder(tau)
    u = b.input(m0 + mt)
    y = u
    if mt and fir is not None:
        if fir.shape != (m0, mt):
            raise DimensionError(f"FIR block must be {m0}x{mt}, got {fir.shape}")
        top = np.vstack([np.eye(m0), np.zeros((mt, m0))])
        y = y + top @ b.fir(fir, u[m0:])
    if mt and tap is not None and np.any(tap != 0):
        tap = np.atleast_2d(tap)
        if tap.shape != (m0, mt):
            raise DimensionError("tap gain has the wrong size")
        top = np.vstack([np.eye(m0), np.zeros((mt, m0))])
        y = y + top @ (tap @ b.delay(u[m0:]))
    return b.build([u], [y])


def assemble_pi_b(fir: FirBlock | None, n_undelayed: int, n_delayed: int, tau: float,
                  n_out: int | None = None) -> DelayedSystem:
    """``[0, Pi~_b]``: only the delayed channels pass through the FIR block."""
    m0, mt = int(n_undelayed), int(n_delayed)
    b = SignalBuilder(tau)
    u = b.input(m0 + mt)
    if fir is None or mt == 0:
        r = n_out if n_out is not None else 0
        return b.build([u], [b.zeros(r)])
    if fir.shape[1] != mt:
        raise DimensionError("FIR input size must equal the number of delayed channels")
    return b.build([u], [b.fir(fir, u[m0:])])


__all__ = [
    "FirBlock",
    "pi_tau",
    "fir_eval",
    "fir_impulse",
    "fir_h2_sq",
    "AdobeDelay",
    "FirTag",
    "DelayedSystem",
    "Signal",
    "SignalBuilder",
    "vstack_signals",
    "delayed_series",
    "delayed_lft_lower",
    "assemble_pi_u",
    "assemble_pi_b",
]
