"""Optimal structured controllers.

The optimal controller is assembled column by column.  Agent ``i`` solves
the problem of steering its descendants using only its own measurement;
inputs of its strict descendants reach the plant ``tau`` seconds late,
which the loop-shifting transform turns into a rational problem plus FIR
compensators.  The columns are then stacked into the Youla parameter and
closed through the standard observer-based parameterization.
"""

from __future__ import annotations

import weakref
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.linalg as sla

from .delay_blocks import (DelayedSystem, FirBlock, SignalBuilder, assemble_pi_b,
                           assemble_pi_u, vstack_signals)
from .errors import NotHurwitzError, ValidationError
from .lti import StateSpace, is_hurwitz
from .loopshift import GammaResult, gamma
from .plant import GeneralizedPlant, Plant
from .riccati import RiccatiError, ric, ric_dual
from .topology import IndexSet

# ----------------------------------------------------------------------------
# Nominal gains and the parameterization
# ----------------------------------------------------------------------------


def local_kalman_gains(plant: Plant) -> list[np.ndarray]:
    """Per-agent estimator gains ``L^i`` from each agent's own noise model."""
    out = []
    for i in range(1, plant.N + 1):
        sol = ric_dual(plant.block("A", i), plant.block("B1", i), plant.block("C2", i),
                       plant.block("D21", i))
        out.append(sol.F)
    return out


def local_estimation_solutions(plant: Plant) -> list[np.ndarray]:
    out = []
    for i in range(1, plant.N + 1):
        sol = ric_dual(plant.block("A", i), plant.block("B1", i), plant.block("C2", i),
                       plant.block("D21", i))
        out.append(sol.X)
    return out


def _identity_lqr(A, B):
    n, m = A.shape[0], B.shape[1]
    C = np.vstack([np.eye(n), np.zeros((m, n))])
    D = np.vstack([np.zeros((n, m)), np.eye(m)])
    return ric(A, B, C, D).F


def default_fd(plant: Plant, weight: float = 1.0) -> np.ndarray:
    """Block-diagonal stabilizing state-feedback gain.

    Each block is the LQR gain of agent ``i`` for its own columns of the
    cost; if that problem is not solvable an identity-weighted LQR is used.
    ``weight`` scales the state weight and gives an alternative valid choice.
    """
    blocks = []
    for i in range(1, plant.N + 1):
        A = plant.block("A", i)
        B = plant.block("B2", i)
        xi = plant.n_parts.indices([i])
        ui = plant.m_parts.indices([i])
        try:
            if weight != 1.0:
                raise RiccatiError("custom weight requested")
            F = ric(A, B, plant.C1[:, xi], plant.D12[:, ui]).F
        except RiccatiError:
            n = A.shape[0]
            m = B.shape[1]
            C = np.vstack([np.sqrt(weight) * np.eye(n), np.zeros((m, n))])
            D = np.vstack([np.zeros((n, m)), np.eye(m)])
            F = ric(A, B, C, D).F
        blocks.append(F)
    return sla.block_diag(*blocks)


def _check_blockdiag(M: np.ndarray, rows, cols, name: str):
    ro, co = rows.offsets, cols.offsets
    mask = np.ones(M.shape, dtype=bool)
    for k in range(len(rows)):
        mask[ro[k]:ro[k + 1], co[k]:co[k + 1]] = False
    if np.any(np.abs(M[mask]) > 0):
        raise ValidationError(f"{name} must be block diagonal")


@dataclass(frozen=True, eq=False)
class YoulaPieces:
    """Observer-based parameterization of all structured stabilizing controllers.

    ``J`` maps ``(y, v)`` to ``(u, eta)``; every admissible controller is
    ``F_l(J, Q)`` for a stable structured ``Q``.  ``T`` is the affine closed
    loop ``T11 + T12 Q T21`` in block form.
    """

    J: StateSpace
    J_inv: StateSpace
    T: StateSpace
    F_d: np.ndarray
    L_d: np.ndarray

    @property
    def T11(self) -> StateSpace:
        return self.T.partition_block(0, 0)

    @property
    def T12(self) -> StateSpace:
        return self.T.partition_block(0, 1)

    @property
    def T21(self) -> StateSpace:
        return self.T.partition_block(1, 0)


def build_parameterization(plant: Plant, F_d=None, L_d=None) -> YoulaPieces:
    """Construct ``J``, its inverse and ``T`` for nominal gains ``F_d``, ``L_d``.

    Defaults: :func:`default_fd` and the block-diagonal Kalman gain.
    """
    F = default_fd(plant) if F_d is None else np.atleast_2d(np.asarray(F_d, dtype=float))
    L = sla.block_diag(*local_kalman_gains(plant)) if L_d is None else np.atleast_2d(np.asarray(L_d, dtype=float))
    if F.shape != (plant.m, plant.n) or L.shape != (plant.n, plant.p):
        raise ValidationError("nominal gains have the wrong shape")
    _check_blockdiag(F, plant.m_parts, plant.n_parts, "F_d")
    _check_blockdiag(L, plant.n_parts, plant.p_parts, "L_d")
    A, B1, B2, C1, D12, C2, D21 = (plant.A, plant.B1, plant.B2, plant.C1, plant.D12, plant.C2, plant.D21)
    if not is_hurwitz(A + B2 @ F):
        raise NotHurwitzError("A + B2 F_d is not Hurwitz")
    if not is_hurwitz(A + L @ C2):
        raise NotHurwitzError("A + L_d C2 is not Hurwitz")
    n, m, p, nw, nz = plant.n, plant.m, plant.p, plant.nw, plant.nz
    J = StateSpace(A + B2 @ F + L @ C2, np.hstack([-L, B2]), np.vstack([F, -C2]),
                   np.block([[np.zeros((m, p)), np.eye(m)], [np.eye(p), np.zeros((p, m))]]),
                   (m, p), (p, m))
    J_inv = StateSpace(A, np.hstack([B2, -L]), np.vstack([C2, -F]),
                       np.block([[np.zeros((p, m)), np.eye(p)], [np.eye(m), np.zeros((m, p))]]),
                       (p, m), (m, p))
    AT = np.block([[A + B2 @ F, -B2 @ F], [np.zeros((n, n)), A + L @ C2]])
    BT = np.block([[B1, B2], [B1 + L @ D21, np.zeros((n, m))]])
    CT = np.block([[C1 + D12 @ F, -D12 @ F], [np.zeros((p, n)), C2]])
    DT = np.block([[np.zeros((nz, nw)), D12], [D21, np.zeros((p, m))]])
    T = StateSpace(AT, BT, CT, DT, (nz, p), (nw, m))
    return YoulaPieces(J, J_inv, T, F, L)


def centralized_lqg(plant: Plant) -> StateSpace:
    """Classical output-feedback LQG controller ignoring the graph."""
    X, F = ric(plant.A, plant.B2, plant.C1, plant.D12)
    L = ric_dual(plant.A, plant.B1, plant.C2, plant.D21).F
    return StateSpace(plant.A + plant.B2 @ F + L @ plant.C2, -L, F, np.zeros((plant.m, plant.p)))


# ----------------------------------------------------------------------------
# Column subproblems
# ----------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ColumnSolution:
    """Everything agent ``i`` needs about its own column of the optimum.

    Attributes
    ----------
    agent : int
        1-based anchor agent.
    order : IndexSet
        Agents controlled by this column, anchor first.
    subplant : GeneralizedPlant
        Plant restricted to ``order`` with agent ``i``'s noise and measurement.
    X, F : ndarray
        Delay-free Riccati solution and gain of the column problem.
    gamma : GammaResult
        Loop-shifting data for the delayed descendants.
    X_tilde, F_tilde : ndarray
        Riccati solution and gain of the loop-shifted problem.
    L : ndarray
        Agent ``i``'s Kalman gain.
    xi : ndarray
        Cost-to-go matrix with the delay taken into account.
    """

    agent: int
    order: IndexSet
    subplant: GeneralizedPlant
    X: np.ndarray
    F: np.ndarray
    gamma: GammaResult
    X_tilde: np.ndarray
    F_tilde: np.ndarray
    L: np.ndarray
    xi: np.ndarray
    n_parts: tuple[int, ...]
    m_parts: tuple[int, ...]

    @property
    def n_local(self) -> int:
        return self.n_parts[0]

    @property
    def m_local(self) -> int:
        return self.m_parts[0]

    @property
    def EL(self) -> np.ndarray:
        """Kalman gain padded to the column state (anchor rows only)."""
        n_d = sum(self.n_parts)
        out = np.zeros((n_d, self.L.shape[1]))
        out[:self.n_local] = self.L
        return out

    @property
    def C2_row(self) -> np.ndarray:
        return self.subplant.C2

    def rows_of(self, j: int) -> np.ndarray:
        """Input rows of agent ``j`` inside the column output."""
        pos = list(self.order).index(j)
        start = sum(self.m_parts[:pos])
        return np.arange(start, start + self.m_parts[pos])

    def states_of(self, j: int) -> np.ndarray:
        pos = list(self.order).index(j)
        start = sum(self.n_parts[:pos])
        return np.arange(start, start + self.n_parts[pos])


def solve_column(plant: Plant, i: int, order: Sequence[int] | None = None,
                 L: np.ndarray | None = None) -> ColumnSolution:
    """Solve the column problem of agent ``i`` (1-based)."""
    order = plant.descendants(i) if order is None else IndexSet(order)
    sub = plant.subplant(i, order)
    X, F = ric(sub.A, sub.B2, sub.C1, sub.D12)
    m_i = plant.m_parts.sizes[i - 1]
    g = gamma(sub, m_i, plant.tau)
    mp = g.modified_plant
    Xt, Ft = ric(mp.A, mp.B2, mp.C1, mp.D12)
    if L is None:
        L = ric_dual(plant.block("A", i), plant.block("B1", i), plant.block("C2", i),
                     plant.block("D21", i)).F
    xi = Xt - g.xi_correction
    xi = 0.5 * (xi + xi.T)
    return ColumnSolution(i, order, sub, X, F, g, Xt, Ft, L, xi,
                          tuple(plant.n_parts.sizes[k - 1] for k in order),
                          tuple(plant.m_parts.sizes[k - 1] for k in order))


_CACHE: "weakref.WeakKeyDictionary[Plant, list[ColumnSolution]]" = weakref.WeakKeyDictionary()


def column_solutions(plant: Plant) -> list[ColumnSolution]:
    """All column solutions of ``plant`` (cached per plant object)."""
    cols = _CACHE.get(plant)
    if cols is None:
        Ls = local_kalman_gains(plant)
        cols = [solve_column(plant, i, L=Ls[i - 1]) for i in range(1, plant.N + 1)]
        _CACHE[plant] = cols
    return cols


# ----------------------------------------------------------------------------
# Delay-free optimum
# ----------------------------------------------------------------------------


def _fd_block(plant: Plant, F_d: np.ndarray, order: Sequence[int]) -> np.ndarray:
    return F_d[np.ix_(plant.m_parts.indices(order), plant.n_parts.indices(order))]


def _embed(plant: Plant, order: Sequence[int], which: str = "m") -> np.ndarray:
    parts = plant.m_parts if which == "m" else plant.n_parts
    idx = parts.indices(order)
    E = np.zeros((parts.total, len(idx)))
    E[idx, np.arange(len(idx))] = 1.0
    return E


def q_opt_delay_free(plant: Plant, F_d=None) -> StateSpace:
    """Delay-free optimal Youla parameter, one observer copy per column."""
    F_d = default_fd(plant) if F_d is None else np.asarray(F_d, dtype=float)
    cols = column_solutions(plant.with_tau(0.0)) if plant.tau else column_solutions(plant)
    As, Bs, Cs = [], [], []
    for c in cols:
        sub = c.subplant
        As.append(sub.A + sub.B2 @ c.F)
        B = np.zeros((sub.n, plant.p))
        B[:, plant.p_parts.indices([c.agent])] = -c.EL
        Bs.append(B)
        Cs.append(_embed(plant, c.order) @ (c.F - _fd_block(plant, F_d, c.order)))
    return StateSpace(sla.block_diag(*As), np.vstack(Bs), np.hstack(Cs), np.zeros((plant.m, plant.p)))


def k_opt_delay_free(plant: Plant) -> StateSpace:
    """Delay-free optimal structured controller ``y -> u``."""
    cols = column_solutions(plant.with_tau(0.0)) if plant.tau else column_solutions(plant)
    sizes = [c.subplant.n for c in cols]
    off = np.concatenate([[0], np.cumsum(sizes)]).astype(int)
    tot = int(off[-1])
    A = np.zeros((tot, tot))
    B = np.zeros((tot, plant.p))
    C = np.zeros((plant.m, tot))
    for c, o in zip(cols, off[:-1]):
        sub = c.subplant
        sl = slice(o, o + sub.n)
        A[sl, sl] = sub.A + sub.B2 @ c.F
        B[sl, plant.p_parts.indices([c.agent])] = -c.EL
        C[:, sl] = _embed(plant, c.order) @ c.F
    # each anchor block corrects with the total estimate of its own state
    for c, o in zip(cols, off[:-1]):
        rows = np.arange(o, o + c.n_local)
        LC = c.L @ c.subplant.C2[:, :c.n_local]
        for k, ok in zip(cols, off[:-1]):
            if c.agent in k.order:
                A[np.ix_(rows, ok + k.states_of(c.agent))] += LC
    return StateSpace(A, B, C, np.zeros((plant.m, plant.p)))


# ----------------------------------------------------------------------------
# Delayed optimum
# ----------------------------------------------------------------------------


def _pi_signals(b: SignalBuilder, col: ColumnSolution, r):
    """``(Pi_u r, Pi_b r)`` for a column command signal ``r``."""
    g = col.gamma
    m0 = g.n_undelayed
    if g.fir is None:
        return r, b.zeros(col.L.shape[1])
    rt = r[m0:]
    top = np.vstack([np.eye(m0), np.zeros((g.n_delayed, m0))])
    pu = r + top @ (b.fir(g.fir_u, rt) + g.tap @ b.delay(rt))
    pb = b.fir(g.fir_b, rt)
    return pu, pb


def _column_signal(b: SignalBuilder, plant: Plant, col: ColumnSolution, F_d: np.ndarray, eta):
    """Output of the optimal Youla column of ``col`` driven by ``eta``."""
    sub = col.subplant
    n_d = sub.n
    EL = col.EL
    C = sub.C2
    Fdd = _fd_block(plant, F_d, col.order)
    B2t = col.gamma.modified_plant.B2
    xa = b.state(n_d)
    xb = b.state(n_d)
    r = col.F_tilde @ xb
    pu, pb = _pi_signals(b, col, r)
    b.set_derivative(xa, sub.A @ xa + sub.B2 @ pu - EL @ eta)
    b.set_derivative(xb, -(EL @ C) @ xa + (sub.A + EL @ C) @ xb + B2t @ r - EL @ pb - EL @ eta)
    return pu - Fdd @ xa


def q_column(plant: Plant, i: int, F_d=None) -> DelayedSystem:
    """Youla column of agent ``i`` before the input delay, ``eta_i -> v``.

    The output stacks the commands for the descendants of ``i`` (anchor
    first).  The rows of strict descendants are delayed by ``tau`` when the
    column is placed into the full parameter.
    """
    F_d = default_fd(plant) if F_d is None else np.asarray(F_d, dtype=float)
    col = column_solutions(plant)[i - 1]
    b = SignalBuilder(plant.tau)
    eta = b.input(col.L.shape[1])
    return b.build([eta], [_column_signal(b, plant, col, F_d, eta)])


def _spread(b: SignalBuilder, plant: Plant, col: ColumnSolution, c):
    """Place a column output into the full input vector, delaying descendants."""
    m = plant.m
    out = b.zeros(m)
    for j in col.order:
        rows = col.rows_of(j)
        E = np.zeros((m, len(rows)))
        E[plant.m_parts.indices([j]), np.arange(len(rows))] = 1.0
        piece = c[rows]
        out = out + E @ (piece if j == col.agent else b.delay(piece))
    return out


def q_opt_delayed(plant: Plant, F_d=None) -> DelayedSystem:
    """Optimal Youla parameter for the delayed problem, ``eta -> v``."""
    F_d = default_fd(plant) if F_d is None else np.asarray(F_d, dtype=float)
    b = SignalBuilder(plant.tau)
    eta = b.input(plant.p)
    v = b.zeros(plant.m)
    for col in column_solutions(plant):
        eta_i = eta[plant.p_parts.indices([col.agent])]
        v = v + _spread(b, plant, col, _column_signal(b, plant, col, F_d, eta_i))
    return b.build([eta], [v])


def close_youla(pieces: YoulaPieces, Q: DelayedSystem | StateSpace) -> DelayedSystem:
    """``F_l(J, Q)`` for a strictly proper (possibly delayed) ``Q``."""
    J = pieces.J
    m, p = pieces.F_d.shape[0], pieces.L_d.shape[1]
    Qd = Q if isinstance(Q, DelayedSystem) else DelayedSystem.from_statespace(Q)
    if np.any(Qd.D0 != 0) or np.any(Qd.D1 != 0):
        raise ValidationError("Youla parameter must be strictly proper here")
    b = SignalBuilder(Qd.tau)
    y = b.input(p)
    xi = b.state(J.n_states)
    eta = J.C[m:] @ xi + y
    v = b.subsystem(Qd, eta)
    b.set_derivative(xi, J.A @ xi + J.B[:, :p] @ y + J.B[:, p:] @ v)
    return b.build([y], [J.C[:m] @ xi + v])


def k_opt_delayed(plant: Plant, F_d=None) -> DelayedSystem:
    """Optimal structured controller with processing delay, ``y -> u``."""
    pieces = build_parameterization(plant, F_d)
    return close_youla(pieces, q_opt_delayed(plant, pieces.F_d))


# ----------------------------------------------------------------------------
# Agent-level controllers
# ----------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class AgentController:
    """Controller run by one agent.

    Two realizations are supported.

    ``kind == "optimal"``: the observer-regulator form.  The agent keeps an
    estimate ``zeta`` of its descendants' states (driven by its own
    measurement only) and a local state ``phi`` that integrates the
    commands received from its ancestors.  With ``r = F_tilde zeta`` it
    applies ``u_i = (Pi_u r)_i + w_i`` where ``w_i`` sums the delayed
    commands received, and it transmits ``r_j`` to each strict descendant
    ``j``.

    ``kind == "youla"``: the general form with a local observer ``xi``,
    innovation ``eta_i = y_i - C2_ii xi`` and a column system
    ``q_column`` producing commands for all descendants.

    Attributes
    ----------
    index : int
        1-based agent number.
    descendants : IndexSet
        Agents whose commands this agent computes (itself first).
    ancestors : tuple of int
        Agents whose transmissions this agent receives.
    observer_A : ndarray
        ``A_dd + E L C2`` for the descendant estimator.
    """

    index: int
    kind: str
    tau: float
    descendants: IndexSet
    ancestors: tuple[int, ...]
    n_parts: tuple[int, ...]
    m_parts: tuple[int, ...]
    A_desc: np.ndarray
    B2_desc: np.ndarray
    B2_tilde: np.ndarray
    F_tilde: np.ndarray
    L: np.ndarray
    C2_local: np.ndarray
    A_local: np.ndarray
    B2_local: np.ndarray
    fir: FirBlock | None = None
    tap: np.ndarray | None = None
    F_d_local: np.ndarray | None = None
    q_column: DelayedSystem | None = None

    @property
    def n_local(self) -> int:
        return self.n_parts[0]

    @property
    def m_local(self) -> int:
        return self.m_parts[0]

    @property
    def p_local(self) -> int:
        return self.C2_local.shape[0]

    @property
    def n_desc(self) -> int:
        return sum(self.n_parts)

    @property
    def m_desc(self) -> int:
        return sum(self.m_parts)

    @property
    def EL(self) -> np.ndarray:
        out = np.zeros((self.n_desc, self.p_local))
        out[:self.n_local] = self.L
        return out

    @property
    def C2_row(self) -> np.ndarray:
        out = np.zeros((self.p_local, self.n_desc))
        out[:, :self.n_local] = self.C2_local
        return out

    @property
    def observer_A(self) -> np.ndarray:
        return self.A_desc + self.EL @ self.C2_row

    @property
    def fir_u(self) -> DelayedSystem:
        """``Pi_u`` acting on the command vector."""
        m0 = self.m_local
        F = None if self.fir is None else FirBlock(self.fir.A, self.fir.B, self.fir.C[:m0], self.tau)
        return assemble_pi_u(F, m0, self.m_desc - m0, self.tau, tap=self.tap)

    @property
    def fir_b(self) -> DelayedSystem:
        """``Pi_b`` acting on the command vector."""
        m0 = self.m_local
        F = None if self.fir is None else FirBlock(self.fir.A, self.fir.B, self.fir.C[m0:], self.tau)
        return assemble_pi_b(F, m0, self.m_desc - m0, self.tau, n_out=self.p_local)

    def transmit_rows(self, j: int) -> np.ndarray:
        """Rows of the command vector sent to descendant ``j``."""
        pos = list(self.descendants).index(j)
        start = sum(self.m_parts[:pos])
        return np.arange(start, start + self.m_parts[pos])

    @property
    def transmit(self) -> dict[int, np.ndarray]:
        return {j: self.transmit_rows(j) for j in self.descendants.strict}

    def to_dict(self) -> dict:
        def arr(M):
            return None if M is None else np.asarray(M).tolist()
        out = {
            "index": self.index,
            "kind": self.kind,
            "tau": self.tau,
            "descendants": list(self.descendants),
            "ancestors": list(self.ancestors),
            "n_parts": list(self.n_parts),
            "m_parts": list(self.m_parts),
            "A_desc": arr(self.A_desc),
            "B2_desc": arr(self.B2_desc),
            "B2_tilde": arr(self.B2_tilde),
            "F_tilde": arr(self.F_tilde),
            "L": arr(self.L),
            "C2_local": arr(self.C2_local),
            "A_local": arr(self.A_local),
            "B2_local": arr(self.B2_local),
            "observer_A": arr(self.observer_A),
            "transmit": {str(j): rows.tolist() for j, rows in self.transmit.items()},
            "fir": None if self.fir is None else {"A": arr(self.fir.A), "B": arr(self.fir.B),
                                                  "C": arr(self.fir.C), "tau": self.fir.tau},
            "tap": arr(self.tap),
            "F_d_local": arr(self.F_d_local),
            "q_column": None if self.q_column is None else _delayed_to_dict(self.q_column),
        }
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "AgentController":
        def a(key):
            v = d.get(key)
            return None if v is None else np.array(v, dtype=float)
        fir = d.get("fir")
        fir = None if fir is None else FirBlock(np.array(fir["A"], float), np.array(fir["B"], float),
                                                np.array(fir["C"], float), fir["tau"])
        q = d.get("q_column")
        return cls(int(d["index"]), d["kind"], float(d["tau"]), IndexSet(d["descendants"]),
                   tuple(d["ancestors"]), tuple(d["n_parts"]), tuple(d["m_parts"]),
                   a("A_desc"), a("B2_desc"), a("B2_tilde"), a("F_tilde"), a("L"), a("C2_local"),
                   a("A_local"), a("B2_local"), fir, a("tap"), a("F_d_local"),
                   None if q is None else _delayed_from_dict(q))


def _delayed_to_dict(G: DelayedSystem) -> dict:
    keys = ("A0", "A1", "B0", "B1", "C0", "C1", "D0", "D1")
    out = {k: getattr(G, k).tolist() for k in keys}
    out["shape"] = [G.n_states, G.n_inputs, G.n_outputs]
    out["tau"] = G.tau
    out["fir_tags"] = [{"offset": t.offset, "A": t.A.tolist(), "B": t.B.tolist(),
                        "Kx": t.Kx.tolist(), "Ku": t.Ku.tolist()} for t in G.fir_tags]
    return out


def _delayed_from_dict(d: dict) -> DelayedSystem:
    from .delay_blocks import FirTag
    n, q, r = d["shape"]
    shapes = {"A0": (n, n), "A1": (n, n), "B0": (n, q), "B1": (n, q), "C0": (r, n), "C1": (r, n),
              "D0": (r, q), "D1": (r, q)}
    M = {k: np.array(d[k], dtype=float).reshape(s) for k, s in shapes.items()}
    tags = tuple(FirTag(t["offset"], np.array(t["A"], float), np.array(t["B"], float),
                        np.array(t["Kx"], float).reshape(-1, n), np.array(t["Ku"], float).reshape(-1, q))
                 for t in d.get("fir_tags", []))
    return DelayedSystem(tau=float(d["tau"]), fir_tags=tags, **M)


def _check_qhat(plant: Plant, q_hat) -> list:
    if q_hat is None:
        return [None] * plant.N
    q_hat = list(q_hat)
    if len(q_hat) != plant.N:
        raise ValidationError("one perturbation column per agent is required")
    for i, Q in enumerate(q_hat, start=1):
        if Q is None:
            continue
        m_d = plant.m_parts.size_of(plant.descendants(i))
        if Q.shape != (m_d, plant.p_parts.sizes[i - 1]):
            raise ValidationError(f"perturbation column {i} must be {m_d}x{plant.p_parts.sizes[i - 1]}")
        if np.any(Q.D != 0):
            raise ValidationError("perturbation columns must be strictly proper")
        if not is_hurwitz(Q.A):
            raise ValidationError("perturbation columns must be stable")
    return q_hat


def agent_controllers(plant: Plant, q_hat: Sequence[StateSpace | None] | None = None,
                      F_d=None) -> list[AgentController]:
    """Per-agent realizations of the optimal (or a perturbed) controller.

    Parameters
    ----------
    plant : Plant
    q_hat : list of StateSpace or None, optional
        Perturbation column per agent, mapping ``eta_i`` to the commands of
        agent ``i``'s descendants.  With ``None`` (or all entries ``None``)
        the optimal observer-regulator form is returned.
    F_d : ndarray, optional
        Nominal gain for the perturbed form.
    """
    q_hat = _check_qhat(plant, q_hat)
    cols = column_solutions(plant)
    youla = any(Q is not None for Q in q_hat)
    if youla:
        F_d = default_fd(plant) if F_d is None else np.asarray(F_d, dtype=float)
    out = []
    for col in cols:
        i = col.agent
        sub = col.subplant
        g = col.gamma
        kw = {}
        if youla:
            qc = q_column(plant, i, F_d)
            Q = q_hat[i - 1]
            if Q is not None:
                qc = _add_delayed(qc, DelayedSystem.from_statespace(Q, plant.tau))
            kw = {"F_d_local": F_d[np.ix_(plant.m_parts.indices([i]), plant.n_parts.indices([i]))],
                  "q_column": qc}
        out.append(AgentController(
            index=i, kind="youla" if youla else "optimal", tau=plant.tau,
            descendants=col.order, ancestors=plant.graph.strict_ancestors(i),
            n_parts=col.n_parts, m_parts=col.m_parts,
            A_desc=sub.A, B2_desc=sub.B2, B2_tilde=g.modified_plant.B2, F_tilde=col.F_tilde,
            L=col.L, C2_local=plant.block("C2", i), A_local=plant.block("A", i),
            B2_local=plant.block("B2", i), fir=g.fir, tap=g.tap if g.fir is not None else None,
            **kw))
    return out


def _add_delayed(G1: DelayedSystem, G2: DelayedSystem) -> DelayedSystem:
    b = SignalBuilder(max(G1.tau, G2.tau))
    u = b.input(G1.n_inputs)
    return b.build([u], [b.subsystem(G1, u) + b.subsystem(G2, u)])


def wire_agents(b: SignalBuilder, plant: Plant, agents: Sequence[AgentController], y):
    """Connect agent controllers to the measurement signal ``y``.

    Returns
    -------
    u : Signal
        Stacked control inputs.
    sent : dict
        ``sent[(i, j)]`` is the command signal agent ``i`` transmits to ``j``
        (before the transmission delay).
    """
    agents = sorted(agents, key=lambda a: a.index)
    if [a.index for a in agents] != list(range(1, plant.N + 1)):
        raise ValidationError("need exactly one controller per agent")
    kinds = {a.kind for a in agents}
    if len(kinds) != 1:
        raise ValidationError("mixing controller kinds is not supported")
    kind = kinds.pop()
    sent = {}
    local = {}
    if kind == "optimal":
        states = {}
        for a in agents:
            zeta = b.state(a.n_desc)
            phi = b.state(a.n_local)
            r = a.F_tilde @ zeta
            states[a.index] = (zeta, phi, r)
            for j in a.descendants.strict:
                sent[(a.index, j)] = r[a.transmit_rows(j)]
        for a in agents:
            zeta, phi, r = states[a.index]
            m0 = a.m_local
            w = b.zeros(m0)
            for k in a.ancestors:
                w = w + b.delay(sent[(k, a.index)])
            p_out = b.zeros(a.p_local)
            u_i = r[:m0] + w
            if a.fir is not None:
                rt = r[m0:]
                fir_u = FirBlock(a.fir.A, a.fir.B, a.fir.C[:m0], a.tau)
                fir_b = FirBlock(a.fir.A, a.fir.B, a.fir.C[m0:], a.tau)
                u_i = u_i + b.fir(fir_u, rt) + a.tap @ b.delay(rt)
                p_out = b.fir(fir_b, rt)
            y_i = y[plant.p_parts.indices([a.index])]
            EL = a.EL
            xhat = zeta[:a.n_local] + phi
            b.set_derivative(zeta, a.A_desc @ zeta + a.B2_tilde @ r - EL @ p_out
                             + EL @ (a.C2_local @ xhat - y_i))
            b.set_derivative(phi, a.A_local @ phi + a.B2_local @ w)
            local[a.index] = u_i
    else:
        cols = {}
        for a in agents:
            xi = b.state(a.n_local)
            y_i = y[plant.p_parts.indices([a.index])]
            eta = y_i - a.C2_local @ xi
            c = b.subsystem(a.q_column, eta)
            cols[a.index] = (xi, c)
            for j in a.descendants.strict:
                sent[(a.index, j)] = c[a.transmit_rows(j)]
        for a in agents:
            xi, c = cols[a.index]
            v = c[:a.m_local]
            for k in a.ancestors:
                v = v + b.delay(sent[(k, a.index)])
            y_i = y[plant.p_parts.indices([a.index])]
            b.set_derivative(xi, (a.A_local + a.B2_local @ a.F_d_local + a.L @ a.C2_local) @ xi
                             - a.L @ y_i + a.B2_local @ v)
            local[a.index] = a.F_d_local @ xi + v
    u = vstack_signals(*[local[i] for i in range(1, plant.N + 1)])
    return u, sent


def aggregate_controllers(plant: Plant, agents: Sequence[AgentController]) -> DelayedSystem:
    """The full controller ``y -> u`` realized by wiring the agents together."""
    b = SignalBuilder(plant.tau)
    y = b.input(plant.p)
    u, _ = wire_agents(b, plant, agents, y)
    return b.build([y], [u])
