"""Structural checks on synthesized Youla parameters and optimality conditions.

:func:`youla_structure_check` samples the Youla parameter on the imaginary
axis and verifies, block by block, that

* blocks with no communication path are zero, and
* blocks fed by a strict ancestor are ``exp(-s tau)`` times a rational
  function (a rational fit of the block times ``exp(s tau)`` is checked on
  points not used for fitting).

:func:`normal_equation_check` verifies the delay-free optimality condition:
for every pair joined by a path, the corresponding block of
``T12~ (T11 + T12 Q T21) T21~`` has no stable part, i.e. it lies in the
orthogonal complement of stable strictly proper systems.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
from scipy.interpolate import AAA

from .cost import closed_loop_map
from .delay_blocks import DelayedSystem
from .lti import StateSpace, conj_transpose, lyapunov_solve, series
from .plant import Plant
from .synthesis import build_parameterization, default_fd, q_opt_delayed
from .topology import Link, sparsity_pattern


@dataclass(frozen=True)
class BlockCheck:
    row: int
    col: int
    link: Link
    residual: float
    ok: bool


def _block_values(Q: DelayedSystem, plant: Plant, i: int, j: int, pts: np.ndarray) -> np.ndarray:
    r = plant.m_parts.indices([i])
    c = plant.p_parts.indices([j])
    return np.array([Q(s)[np.ix_(r, c)] for s in pts])


def _rational_fit_error(pts_fit, vals_fit, pts_test, vals_test) -> float:
    """Worst relative error of entrywise AAA fits on held-out points."""
    scale = max(1e-300, float(np.max(np.abs(vals_fit))))
    worst = 0.0
    for a in range(vals_fit.shape[1]):
        for b in range(vals_fit.shape[2]):
            f = vals_fit[:, a, b]
            if np.max(np.abs(f)) <= 1e-14 * scale:
                continue
            # stack conjugate points: real systems are symmetric
            z = np.concatenate([pts_fit, np.conj(pts_fit)])
            y = np.concatenate([f, np.conj(f)])
            with warnings.catch_warnings():
                # spurious pole-zero pairs are removed by AAA's own clean-up
                warnings.simplefilter("ignore", RuntimeWarning)
                r = AAA(z, y, rtol=1e-13, max_terms=200)
            err = np.max(np.abs(r(pts_test) - vals_test[:, a, b])) / scale
            worst = max(worst, float(err))
    return worst


def youla_structure_check(plant: Plant, Q: DelayedSystem | None = None, *,
                          zero_tol: float = 1e-10, fit_tol: float = 1e-8,
                          n_fit: int = 240, n_test: int = 60) -> list[BlockCheck]:
    """Check the sparsity and delay structure of a Youla parameter.

    Parameters
    ----------
    plant : Plant
    Q : DelayedSystem, optional
        Youla parameter ``eta -> v``; defaults to the optimal one.
    """
    if Q is None:
        Q = q_opt_delayed(plant, default_fd(plant))
    pattern = sparsity_pattern(plant.graph, plant.tau)
    fit = 1j * np.logspace(-2, 2.5, n_fit)
    test = 1j * np.logspace(-1.9, 2.4, n_test) * (1 + 0.01 * np.sin(np.arange(n_test)))
    both = np.concatenate([fit, test])
    out = []
    N = plant.N
    for i in range(1, N + 1):
        for j in range(1, N + 1):
            link = Link(pattern[i - 1, j - 1])
            if link == Link.LOCAL:
                continue
            vals = _block_values(Q, plant, i, j, both)
            if link == Link.ZERO:
                res = float(np.max(np.abs(vals))) if vals.size else 0.0
                out.append(BlockCheck(i, j, link, res, res <= zero_tol))
                continue
            if plant.tau == 0:
                out.append(BlockCheck(i, j, link, 0.0, True))
                continue
            shifted = vals * np.exp(both * plant.tau)[:, None, None]
            res = _rational_fit_error(fit, shifted[:n_fit], test, shifted[n_fit:])
            out.append(BlockCheck(i, j, link, res, res <= fit_tol))
    return out


# ----------------------------------------------------------------------------
# Normal equations
# ----------------------------------------------------------------------------


def stable_part(G: StateSpace) -> StateSpace:
    """Strictly proper stable part of ``G`` (no imaginary-axis poles allowed)."""
    T, U, k = sla.schur(G.A, output="real", sort="lhp")
    if k == 0:
        return StateSpace(np.zeros((0, 0)), np.zeros((0, G.n_inputs)), np.zeros((G.n_outputs, 0)),
                          np.zeros_like(G.D))
    T11, T12, T22 = T[:k, :k], T[:k, k:], T[k:, k:]
    # T11 X - X T22 = -T12 decouples the two parts
    X = sla.solve_sylvester(T11, -T22, -T12)
    Bt = U.T @ G.B
    Ct = G.C @ U
    return StateSpace(T11, Bt[:k] - X @ Bt[k:], Ct[:, :k], np.zeros_like(G.D))


def hankel_singular_values(G: StateSpace) -> np.ndarray:
    if G.n_states == 0:
        return np.zeros(0)
    # square-root form: avoids the sqrt of roundoff in eig(Wc Wo)
    Rc = _psd_factor(lyapunov_solve(G.A.T, G.B @ G.B.T))
    Ro = _psd_factor(lyapunov_solve(G.A, G.C.T @ G.C))
    return np.linalg.svd(Ro.T @ Rc, compute_uv=False)


def _psd_factor(W: np.ndarray) -> np.ndarray:
    w, V = np.linalg.eigh(0.5 * (W + W.T))
    return V * np.sqrt(np.clip(w, 0.0, None))


def omega(plant: Plant, F_d=None) -> StateSpace:
    """``T12~ (T11 + T12 Q_opt T21) T21~`` for the delay-free optimum."""
    pieces = build_parameterization(plant, F_d)
    Tcl = closed_loop_map(plant.with_tau(0.0))
    T12 = pieces.T12
    T21 = pieces.T21
    return series(series(conj_transpose(T21), Tcl), conj_transpose(T12))


def _krylov_basis(A: np.ndarray, B: np.ndarray, tol: float, scale: float | None = None) -> np.ndarray:
    """Orthonormal basis of the reachable subspace of ``(A, B)``.

    A direction is kept when its component orthogonal to the current basis
    exceeds ``tol`` times the scale of the data that produced it.
    """
    n = A.shape[0]
    Q = np.zeros((n, 0))
    block = B
    scale = max(np.linalg.norm(B, 2) if scale is None else scale, 1e-300)
    while Q.shape[1] < n and block.shape[1]:
        block = block - Q @ (Q.T @ block)
        block = block - Q @ (Q.T @ block)
        U, sv, _ = np.linalg.svd(block, full_matrices=False)
        keep = sv > tol * scale
        if not np.any(keep):
            break
        new = U[:, keep]
        Q = np.hstack([Q, new])
        block = A @ new
        scale = max(scale, np.linalg.norm(A, 2))
    return Q


def minimal_realization(G: StateSpace, tol: float = 1e-8, b_scale: float | None = None,
                        c_scale: float | None = None) -> StateSpace:
    """Drop uncontrollable, then unobservable modes.

    Ranks are decided relative to ``b_scale`` and ``c_scale`` (default: the
    norms of ``B`` and ``C``), so a realization extracted from a larger one
    can be judged against the size of the original data.
    """
    Qc = _krylov_basis(G.A, G.B, tol, b_scale)
    A, B, C = Qc.T @ G.A @ Qc, Qc.T @ G.B, G.C @ Qc
    Qo = _krylov_basis(A.T, C.T, tol, c_scale)
    return StateSpace(Qo.T @ A @ Qo, Qo.T @ B, C @ Qo, G.D)


@dataclass(frozen=True)
class OmegaBlock:
    row: int
    col: int
    path: bool
    stable_order: int
    largest_hsv: float


def normal_equation_check(plant: Plant, F_d=None, rank_tol: float = 1e-8) -> list[OmegaBlock]:
    """Stable-part order of every block ``Omega_ij``.

    The stable part of each block is reduced to a minimal realization at
    relative rank tolerance ``rank_tol``; the optimum requires that nothing
    survives (``stable_order == 0``) for each block with a path ``j -> i``
    (including ``i = j``).  Other blocks are reported too; they are
    generally nonzero.
    """
    Om = omega(plant, F_d)
    out = []
    for i in range(1, plant.N + 1):
        for j in range(1, plant.N + 1):
            r = plant.m_parts.indices([i])
            c = plant.p_parts.indices([j])
            blk = StateSpace(Om.A, Om.B[:, c], Om.C[r], Om.D[np.ix_(r, c)])
            sp = minimal_realization(stable_part(blk), rank_tol,
                                     np.linalg.norm(blk.B, 2), np.linalg.norm(blk.C, 2))
            hsv = hankel_singular_values(sp)
            path = i in plant.graph.descendants(j)
            out.append(OmegaBlock(i, j, path, sp.n_states, float(hsv[0]) if hsv.size else 0.0))
    return out


__all__ = [
    "BlockCheck", "youla_structure_check", "stable_part", "hankel_singular_values",
    "omega", "OmegaBlock", "normal_equation_check", "minimal_realization",
]
