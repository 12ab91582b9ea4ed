"""Closed-form optimal costs and the matrices behind them.

All four costs share the form

    J = trace(Y_cen C1^T C1) + trace(X L D21 D21^T L^T)

with ``L = blkdiag(L^i)`` the local Kalman gains and ``X`` one of

* ``X_cen``: the centralized control Riccati solution,
* ``X_dec = blkdiag(X^i(1,1))``: delay-free structured optimum,
* ``X_del = blkdiag(Xi_c^i(1,1))``: every agent hears every other agent,
  with delay,
* ``X_decdel = blkdiag(Xi^i(1,1))``: structured optimum with delay.

Here ``M(1,1)`` is the leading block of ``M`` that belongs to the anchor
agent.  Because ``L D21`` is block diagonal only these blocks matter.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np
import scipy.linalg as sla

from .errors import ValidationError
from .lti import StateSpace, h2_norm_sq, lyapunov_solve
from .plant import Plant
from .riccati import ric, ric_dual
from .synthesis import (column_solutions, default_fd, local_kalman_gains, solve_column)
from .topology import DiGraph


def _sym(M):
    return 0.5 * (M + M.T)


def _anchor_block(M: np.ndarray, n_i: int) -> np.ndarray:
    return M[:n_i, :n_i]


def _min_eig(M: np.ndarray) -> float:
    return float(np.min(np.linalg.eigvalsh(_sym(M)))) if M.size else 0.0


def x_cen(plant: Plant):
    """Centralized control Riccati solution ``(X_cen, F_cen)``."""
    return ric(plant.A, plant.B2, plant.C1, plant.D12)


def y_cen(plant: Plant):
    """Centralized estimation Riccati solution ``(Y_cen, L_cen)``."""
    return ric_dual(plant.A, plant.B1, plant.C2, plant.D21)


def _noise_weight(plant: Plant) -> np.ndarray:
    L = sla.block_diag(*local_kalman_gains(plant))
    LD = L @ plant.D21
    return LD @ LD.T


def _trace_form(plant: Plant, X: np.ndarray, Y: np.ndarray | None = None) -> float:
    Y = y_cen(plant).X if Y is None else Y
    return float(np.trace(Y @ plant.C1.T @ plant.C1) + np.trace(X @ _noise_weight(plant)))


# ----------------------------------------------------------------------------
# Per-agent matrices
# ----------------------------------------------------------------------------


def xi_tau(plant: Plant, i: int) -> np.ndarray:
    """Delay-aware cost-to-go of agent ``i``'s column (descendant ordering)."""
    return column_solutions(plant)[i - 1].xi


def centralized_order(plant: Plant, i: int) -> tuple[int, ...]:
    """``i`` followed by every other agent in ascending order."""
    return (i,) + tuple(k for k in range(1, plant.N + 1) if k != i)


def xi_c_tau(plant: Plant, i: int) -> np.ndarray:
    """Like :func:`xi_tau` but for a column that controls every agent.

    The rows and columns are ordered ``i`` first, then the rest ascending.
    """
    full = plant.with_graph(DiGraph.complete(plant.N))
    return solve_column(full, i, order=centralized_order(plant, i)).xi


def _permuted_xcen(plant: Plant, order: Sequence[int]) -> np.ndarray:
    idx = plant.n_parts.indices(order)
    return x_cen(plant).X[np.ix_(idx, idx)]


def gramian_w_x(plant: Plant, i: int, *, definitional: bool = False) -> np.ndarray:
    """``X^i - X_cen`` restricted to the descendants of ``i``.

    Solved from its Lyapunov equation; with ``definitional=True`` the
    difference is formed directly instead.
    """
    col = column_solutions(plant.with_tau(0.0))[i - 1]
    if definitional:
        return _sym(col.X - _permuted_xcen(plant, col.order))
    Fc = x_cen(plant).F
    sub = col.subplant
    Acl = sub.A + sub.B2 @ col.F
    E_m = _select(plant.m_parts, col.order)
    E_n = _select(plant.n_parts, col.order)
    dF = E_m @ col.F - Fc @ E_n
    Q = dF.T @ plant.D12.T @ plant.D12 @ dF
    return _sym(lyapunov_solve(Acl, Q))


def gramian_w_y(plant: Plant, i: int) -> np.ndarray:
    """Controllability Gramian of agent ``i``'s column state.

    The column state evolves under ``A + B2 F^i`` on the descendants of
    ``i`` and is driven only through ``L^i D21_ii`` in the anchor rows.
    """
    col = column_solutions(plant.with_tau(0.0))[i - 1]
    sub = col.subplant
    Acl = sub.A + sub.B2 @ col.F
    G = col.EL @ plant.block("D21", i)
    return _sym(lyapunov_solve(Acl.T, G @ G.T))


def _select(parts, order) -> np.ndarray:
    idx = parts.indices(order)
    E = np.zeros((parts.total, len(idx)))
    E[idx, np.arange(len(idx))] = 1.0
    return E


def closed_loop_map(plant: Plant) -> StateSpace:
    """Delay-free optimal closed loop ``w -> z`` in column coordinates.

    The state stacks one column state per agent (descendants of that
    agent only) followed by the centralized estimation error.
    """
    cols = column_solutions(plant.with_tau(0.0))
    Lc = sla.block_diag(*local_kalman_gains(plant))
    n = plant.n
    sizes = [c.subplant.n for c in cols]
    off = np.concatenate([[0], np.cumsum(sizes)]).astype(int)
    tot = int(off[-1])
    A = np.zeros((tot + n, tot + n))
    B = np.zeros((tot + n, plant.nw))
    C = np.zeros((plant.nz, tot + n))
    for c, o in zip(cols, off[:-1]):
        sub = c.subplant
        sl = slice(o, o + sub.n)
        i = c.agent
        A[sl, sl] = sub.A + sub.B2 @ c.F
        rows_i = plant.n_parts.indices([i])
        A[sl, tot + rows_i] = -c.EL @ plant.block("C2", i)
        B[sl, plant.w_parts.indices([i])] = -c.EL @ plant.block("D21", i)
        C[:, sl] = plant.C1 @ _select(plant.n_parts, c.order) + plant.D12 @ _select(plant.m_parts, c.order) @ c.F
    A[tot:, tot:] = plant.A + Lc @ plant.C2
    B[tot:] = plant.B1 + Lc @ plant.D21
    C[:, tot:] = plant.C1
    return StateSpace(A, B, C, np.zeros((plant.nz, plant.nw)))


def gramian_theta(plant: Plant, *, solve: bool = False) -> np.ndarray:
    """Controllability Gramian of :func:`closed_loop_map`.

    By default it is assembled as ``blkdiag(W_Y^1, ..., W_Y^N, Y_cen)``;
    with ``solve=True`` the full Lyapunov equation is solved instead.
    """
    if solve:
        G = closed_loop_map(plant)
        return _sym(lyapunov_solve(G.A.T, G.B @ G.B.T))
    blocks = [gramian_w_y(plant, i) for i in range(1, plant.N + 1)]
    return sla.block_diag(*blocks, y_cen(plant).X)


# ----------------------------------------------------------------------------
# Costs
# ----------------------------------------------------------------------------


def cost_centralized(plant: Plant, *, dual: bool = False) -> float:
    """Optimal cost with no structure and no delay.

    The primal form is ``trace(Y C1^T C1) + trace(X L D21 D21^T L^T)``; the
    dual form is ``trace(X B1 B1^T) + trace(Y F^T D12^T D12 F)``.
    """
    X, F = x_cen(plant)
    Y, L = y_cen(plant)
    if dual:
        DF = plant.D12 @ F
        return float(np.trace(X @ plant.B1 @ plant.B1.T) + np.trace(Y @ DF.T @ DF))
    LD = L @ plant.D21
    return float(np.trace(Y @ plant.C1.T @ plant.C1) + np.trace(X @ LD @ LD.T))


def x_dec(plant: Plant) -> np.ndarray:
    cols = column_solutions(plant.with_tau(0.0))
    return sla.block_diag(*[_anchor_block(c.X, c.n_local) for c in cols])


def x_del(plant: Plant) -> np.ndarray:
    return sla.block_diag(*[_anchor_block(xi_c_tau(plant, i), plant.n_parts.sizes[i - 1])
                            for i in range(1, plant.N + 1)])


def x_decdel(plant: Plant) -> np.ndarray:
    return sla.block_diag(*[_anchor_block(c.xi, c.n_local) for c in column_solutions(plant)])


def cost_decentralized(plant: Plant) -> float:
    """Optimal cost with the communication structure but no delay."""
    return _trace_form(plant, x_dec(plant))


def cost_delayed(plant: Plant) -> float:
    """Optimal cost when every agent hears every other agent after ``tau``."""
    return _trace_form(plant, x_del(plant))


def cost_dec_delayed(plant: Plant) -> float:
    """Optimal cost with the communication structure and the delay."""
    return _trace_form(plant, x_decdel(plant))


def decentralization_gap_dual(plant: Plant) -> float:
    """``J_dec - J_cen`` computed from the ``W_Y`` Gramians."""
    Fc = x_cen(plant).F
    cols = column_solutions(plant.with_tau(0.0))
    tot = 0.0
    for c in cols:
        dF = _select(plant.m_parts, c.order) @ c.F - Fc @ _select(plant.n_parts, c.order)
        M = plant.D12 @ dF
        tot += float(np.trace(M @ gramian_w_y(plant, c.agent) @ M.T))
    return tot


# ----------------------------------------------------------------------------
# Orderings
# ----------------------------------------------------------------------------


@dataclass(frozen=True)
class OrderingMargins:
    """Smallest eigenvalues of the four differences that must be PSD."""

    dec_minus_cen: float
    decdel_minus_dec: float
    del_minus_cen: float
    decdel_minus_del: float
    scale: float

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.dec_minus_cen, self.decdel_minus_dec, self.del_minus_cen, self.decdel_minus_del)

    def ok(self, tol: float = 1e-9) -> bool:
        return min(self.as_tuple()) >= -tol * self.scale


def ordering_check(plant: Plant) -> OrderingMargins:
    """Margins of ``blkdiag(X_cen(i,i)) <= X_dec <= X_decdel`` and the
    analogous chain through ``X_del``."""
    Xc = x_cen(plant).X
    Xcd = sla.block_diag(*[Xc[np.ix_(ix, ix)] for ix in
                           (plant.n_parts.indices([i]) for i in range(1, plant.N + 1))])
    Xd, Xl, Xdd = x_dec(plant), x_del(plant), x_decdel(plant)
    scale = 1.0 + max(np.linalg.norm(M, 2) for M in (Xc, Xd, Xl, Xdd))
    return OrderingMargins(_min_eig(Xd - Xcd), _min_eig(Xdd - Xd), _min_eig(Xl - Xcd),
                           _min_eig(Xdd - Xl), float(scale))


# ----------------------------------------------------------------------------
# Sub-optimality penalty
# ----------------------------------------------------------------------------


def _delay_split_norm(A0, B0, C0, A1, B1, C1, tau) -> float:
    """``|| G0 + exp(-s tau) G1 ||_2^2`` for strictly proper ``G0``, ``G1``."""
    def gram(A, B, C):
        if A.shape[0] == 0:
            return 0.0
        Wo = lyapunov_solve(A, C.T @ C)
        return float(np.trace(B.T @ Wo @ B))
    n0, n1 = A0.shape[0], A1.shape[0]
    total = gram(A0, B0, C0) + gram(A1, B1, C1)
    if n0 and n1:
        # A0^T W + W A1 + C0^T C1 = 0
        W = sla.solve_sylvester(A0.T, A1, -C0.T @ C1)
        total += 2.0 * float(np.trace(B0.T @ sla.expm(A0.T * tau) @ W @ B1))
    return max(total, 0.0)


def cost_suboptimal_penalty(plant: Plant, q_hat: Sequence[StateSpace | None], F_d=None) -> float:
    """Extra cost of perturbing the optimal Youla columns by ``q_hat``.

    ``q_hat[i]`` maps agent ``i+1``'s innovation to the commands of its
    descendants (anchor first); the strict-descendant rows are delayed by
    ``tau`` before use.  The penalty is ``|| T12 Q_delta D21 ||_2^2`` with
    ``T12 = (C1 + D12 F_d)(sI - A - B2 F_d)^{-1} B2 + D12``.
    """
    F_d = default_fd(plant) if F_d is None else np.asarray(F_d, dtype=float)
    if len(q_hat) != plant.N:
        raise ValidationError("one perturbation column per agent is required")
    AK = plant.A + plant.B2 @ F_d
    CK = plant.C1 + plant.D12 @ F_d
    total = 0.0
    for i, Q in enumerate(q_hat, start=1):
        if Q is None:
            continue
        if np.any(Q.D != 0):
            raise ValidationError("perturbation columns must be strictly proper")
        order = plant.descendants(i)
        m_i = plant.m_parts.sizes[i - 1]
        E = _select(plant.m_parts, order)
        D21 = plant.block("D21", i)
        parts = []
        for rows in (slice(0, m_i), slice(m_i, None)):
            Ej = E[:, rows]
            Cq = Q.C[rows]
            # T12 Ej Q D21: states (x_T, x_Q)
            A = np.block([[AK, plant.B2 @ Ej @ Cq], [np.zeros((Q.n_states, plant.n)), Q.A]])
            B = np.vstack([np.zeros((plant.n, D21.shape[1])), Q.B @ D21])
            C = np.hstack([CK, plant.D12 @ Ej @ Cq])
            parts.append((A, B, C))
        (A0, B0, C0), (A1, B1, C1) = parts
        tau = plant.tau
        if tau == 0:
            G = StateSpace(sla.block_diag(A0, A1), np.vstack([B0, B1]), np.hstack([C0, C1]),
                           np.zeros((C0.shape[0], B0.shape[1])))
            total += h2_norm_sq(G)
        else:
            total += _delay_split_norm(A0, B0, C0, A1, B1, C1, tau)
    return total


# ----------------------------------------------------------------------------
# Report
# ----------------------------------------------------------------------------


@dataclass(frozen=True)
class CostReport:
    """The four optimal costs with their matrices and cross-checks."""

    J_cen: float
    J_dec: float
    J_del: float
    J_decdel: float
    J_cen_dual: float
    J_dec_dual: float
    margins: OrderingMargins
    X_dec: np.ndarray
    X_del: np.ndarray
    X_decdel: np.ndarray
    Y_cen: np.ndarray

    def rows(self) -> list[tuple[str, float]]:
        m = self.margins
        return [("J_cen", self.J_cen), ("J_dec", self.J_dec), ("J_del", self.J_del),
                ("J_decdel", self.J_decdel), ("J_cen_dual", self.J_cen_dual),
                ("J_dec_dual", self.J_dec_dual),
                ("margin_dec_minus_cen", m.dec_minus_cen),
                ("margin_decdel_minus_dec", m.decdel_minus_dec),
                ("margin_del_minus_cen", m.del_minus_cen),
                ("margin_decdel_minus_del", m.decdel_minus_del)]

    def to_dict(self) -> dict:
        d = {k: v for k, v in self.rows()}
        d["margins_ok"] = self.margins.ok()
        d["margin_scale"] = self.margins.scale
        for name in ("X_dec", "X_del", "X_decdel", "Y_cen"):
            d[name] = getattr(self, name).tolist()
        return d


def cost_report(plant: Plant) -> CostReport:
    Y = y_cen(plant).X
    J_cen = cost_centralized(plant)
    return CostReport(
        J_cen=J_cen,
        J_dec=cost_decentralized(plant),
        J_del=cost_delayed(plant),
        J_decdel=cost_dec_delayed(plant),
        J_cen_dual=cost_centralized(plant, dual=True),
        J_dec_dual=J_cen + decentralization_gap_dual(plant),
        margins=ordering_check(plant),
        X_dec=x_dec(plant), X_del=x_del(plant), X_decdel=x_decdel(plant), Y_cen=Y)


__all__ = [
    "x_cen", "y_cen", "xi_tau", "xi_c_tau", "centralized_order",
    "gramian_w_x", "gramian_w_y", "gramian_theta", "closed_loop_map",
    "cost_centralized", "cost_decentralized", "cost_delayed", "cost_dec_delayed",
    "x_dec", "x_del", "x_decdel", "decentralization_gap_dual",
    "OrderingMargins", "ordering_check", "cost_suboptimal_penalty",
    "CostReport", "cost_report",
]
