"""Stabilizing solutions of the control algebraic Riccati equation.

``ric(A, B, C, D)`` returns ``X`` solving

    A^T X + X A + C^T C - (X B + C^T D)(D^T D)^{-1}(B^T X + D^T C) = 0

with ``A + B F`` Hurwitz for ``F = -(D^T D)^{-1}(B^T X + D^T C)``.  The
estimation equation is obtained from the transposed data.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .errors import DimensionError, NotHurwitzError, RiccatiError
from .lti import is_hurwitz, lyapunov_solve

IMAG_AXIS_TOL = 1e-8
PSD_TOL = 1e-9
RESIDUAL_TOL = 1e-8


@dataclass(frozen=True, eq=False)
class RiccatiSolution:
    """Stabilizing Riccati solution ``X`` and its gain ``F``."""

    X: np.ndarray
    F: np.ndarray
    residual: float = 0.0

    def __iter__(self):
        # allows ``X, F = ric(...)``
        yield self.X
        yield self.F


@dataclass(frozen=True)
class RiccatiDiagnostics:
    """Outcome of the three standard solvability checks.

    Attributes
    ----------
    r1_min_eig : float
        Smallest eigenvalue of ``D^T D``.
    r2_min_sv : float
        Smallest singular value of ``[A - lam I, B]`` over eigenvalues with
        nonnegative real part (``inf`` when ``A`` is Hurwitz).
    r3_min_sv : float
        Smallest singular value of ``[[A - iw I, B], [C, D]]`` on the grid.
    r3_hamiltonian_ok : bool
        Whether the Hamiltonian has no imaginary-axis eigenvalues.
    """

    r1_min_eig: float
    r1_ok: bool
    r2_min_sv: float
    r2_ok: bool
    r3_min_sv: float
    r3_hamiltonian_ok: bool
    r3_ok: bool

    @property
    def ok(self) -> bool:
        return self.r1_ok and self.r2_ok and self.r3_ok

    def failures(self) -> list[str]:
        out = []
        if not self.r1_ok:
            out.append(f"D^T D is not positive definite (min eigenvalue {self.r1_min_eig:.3e})")
        if not self.r2_ok:
            out.append(f"(A, B) is not stabilizable (PBH margin {self.r2_min_sv:.3e})")
        if not self.r3_ok:
            out.append(f"pencil loses column rank on the imaginary axis (margin {self.r3_min_sv:.3e})")
        return out


def _check_dims(A, B, C, D):
    A, B, C, D = (np.atleast_2d(np.asarray(M, dtype=float)) for M in (A, B, C, D))
    n = A.shape[0]
    if A.shape != (n, n) or B.shape[0] != n or C.shape[1] != n or D.shape != (C.shape[0], B.shape[1]):
        raise DimensionError(f"inconsistent Riccati data A{A.shape} B{B.shape} C{C.shape} D{D.shape}")
    return A, B, C, D


def hamiltonian(A, B, C, D) -> np.ndarray:
    """Hamiltonian matrix whose stable subspace yields the solution."""
    A, B, C, D = _check_dims(A, B, C, D)
    R = D.T @ D
    Ri = np.linalg.inv(R)
    Ab = A - B @ Ri @ D.T @ C
    Qb = C.T @ (np.eye(D.shape[0]) - D @ Ri @ D.T) @ C
    Qb = 0.5 * (Qb + Qb.T)
    return np.block([[Ab, -B @ Ri @ B.T], [-Qb, -Ab.T]])


def check_riccati_assumptions(A, B, C, D, grid=None, tol: float = 1e-9) -> RiccatiDiagnostics:
    """Report on positivity of ``D^T D``, stabilizability and the pencil rank."""
    A, B, C, D = _check_dims(A, B, C, D)
    n = A.shape[0]
    R = D.T @ D
    r1 = float(np.min(np.linalg.eigvalsh(R))) if R.size else np.inf
    scale = 1.0 + np.linalg.norm(R)
    r1_ok = r1 > tol * scale

    r2 = np.inf
    for lam in np.linalg.eigvals(A):
        if lam.real >= -1e-9:
            M = np.hstack([A - lam * np.eye(n), B])
            r2 = min(r2, float(np.linalg.svd(M, compute_uv=False)[-1]))
    r2_ok = r2 > tol * (1.0 + np.linalg.norm(A) + np.linalg.norm(B))

    if grid is None:
        grid = np.concatenate([[0.0], np.logspace(-3, 3, 50)])
    r3 = np.inf
    for w in grid:
        M = np.block([[A - 1j * w * np.eye(n), B], [C.astype(complex), D]])
        sv = np.linalg.svd(M, compute_uv=False)
        # full column rank requires n + m singular values
        r3 = min(r3, float(sv[n + B.shape[1] - 1]) if len(sv) >= n + B.shape[1] else 0.0)
    ham_ok = False
    if r1_ok:
        H = hamiltonian(A, B, C, D)
        ev = np.linalg.eigvals(H)
        ham_ok = bool(np.all(np.abs(ev.real) >= IMAG_AXIS_TOL * max(np.linalg.norm(H), 1.0)))
    r3_ok = ham_ok and r3 > tol
    return RiccatiDiagnostics(r1, bool(r1_ok), r2, bool(r2_ok), r3, ham_ok, bool(r3_ok))


def _are_residual(A, B, C, D, X, Ri):
    G = X @ B + C.T @ D
    return A.T @ X + X @ A + C.T @ C - G @ Ri @ G.T


def _gain(B, C, D, X, Ri):
    return -Ri @ (B.T @ X + D.T @ C)


def ric(A, B, C, D, max_newton: int = 25) -> RiccatiSolution:
    """Stabilizing solution of the control Riccati equation.

    The stable invariant subspace of the Hamiltonian is extracted with an
    ordered real Schur form, then polished by Newton-Kleinman iterations.

    Returns
    -------
    RiccatiSolution
        ``X`` symmetric positive semidefinite and ``F`` such that
        ``A + B F`` is Hurwitz.

    Raises
    ------
    RiccatiError
        If ``D^T D`` is singular, the Hamiltonian has imaginary-axis
        eigenvalues, or the extracted solution fails validation.
    """
    A, B, C, D = _check_dims(A, B, C, D)
    n = A.shape[0]
    R = D.T @ D
    if R.size and np.min(np.linalg.eigvalsh(R)) <= 1e-12 * (1 + np.linalg.norm(R)):
        raise RiccatiError("D^T D is not positive definite")
    Ri = np.linalg.inv(R)
    Ri = 0.5 * (Ri + Ri.T)
    if n == 0:
        return RiccatiSolution(np.zeros((0, 0)), np.zeros((B.shape[1], 0)))
    H = hamiltonian(A, B, C, D)
    ev = np.linalg.eigvals(H)
    if np.any(np.abs(ev.real) < IMAG_AXIS_TOL * max(np.linalg.norm(H), 1.0)):
        raise RiccatiError("Hamiltonian has eigenvalues on the imaginary axis")
    # balance the Hamiltonian before the Schur step for better conditioning
    Hb, (sc, _perm) = sla.matrix_balance(H, permute=False, separate=True)
    T, Z, sdim = sla.schur(Hb, output="real", sort="lhp")
    if sdim != n:
        raise RiccatiError(f"stable subspace has dimension {sdim}, expected {n}")
    Z = sc[:, None] * Z
    U1, U2 = Z[:n, :n], Z[n:, :n]
    if np.linalg.cond(U1) > 1e14:
        raise RiccatiError("stable subspace is not complementary to the output space")
    X = np.linalg.solve(U1.T, U2.T).T
    X = 0.5 * (X + X.T)

    scale = 1.0 + np.linalg.norm(X)
    best = X
    best_res = np.linalg.norm(_are_residual(A, B, C, D, X, Ri))
    for _ in range(max_newton):
        if best_res <= 1e-3 * RESIDUAL_TOL * scale:
            break
        F = _gain(B, C, D, X, Ri)
        Ak = A + B @ F
        if not is_hurwitz(Ak):
            break
        Ck = C + D @ F
        try:
            Xn = lyapunov_solve(Ak, Ck.T @ Ck)
        except Exception:
            break
        res = np.linalg.norm(_are_residual(A, B, C, D, Xn, Ri))
        X = Xn
        if res < best_res:
            best, best_res = Xn, res
        elif res > 10 * best_res:
            break
    X = best
    F = _gain(B, C, D, X, Ri)
    scale = 1.0 + np.linalg.norm(X)
    if best_res > RESIDUAL_TOL * scale:
        raise RiccatiError(f"Riccati residual {best_res:.3e} exceeds tolerance")
    if not is_hurwitz(A + B @ F):
        raise RiccatiError("closed loop A + B F is not Hurwitz")
    if np.min(np.linalg.eigvalsh(X)) < -PSD_TOL * scale:
        raise RiccatiError("solution is not positive semidefinite")
    return RiccatiSolution(X, F, float(best_res))


def ric_dual(A, B, C, D) -> RiccatiSolution:
    """Estimation Riccati solution ``(Y, L)`` with ``A + L C`` Hurwitz.

    Solves the transposed control problem; ``A, B, C, D`` here are the
    dynamics, noise input, measurement map and measurement feedthrough.
    """
    sol = ric(np.asarray(A).T, np.atleast_2d(C).T, np.atleast_2d(B).T, np.atleast_2d(D).T)
    return RiccatiSolution(sol.X, sol.F.T, sol.residual)


__all__ = [
    "RiccatiSolution",
    "RiccatiDiagnostics",
    "check_riccati_assumptions",
    "hamiltonian",
    "ric",
    "ric_dual",
    "NotHurwitzError",
]
