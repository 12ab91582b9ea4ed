"""Loop shifting for plants whose inputs are partly delayed.

Given a four-block plant whose control inputs split into an undelayed group
(first ``m0`` columns) and a group delayed by ``tau``, :func:`gamma` returns

* a rational modified plant with new ``B2`` and ``C1`` (``A``, ``B1``,
  ``C2`` and ``D21`` are untouched, so the estimation problem is unchanged),
* FIR compensators ``Pi_u = [[I, Pi~_u], [0, I]]`` and ``Pi_b = [0, Pi~_b]``

such that if ``K~`` is a controller for the modified plant, then
``K = Pi_u K~ (I - Pi_b K~)^{-1}`` applied through the input delay achieves
the cost of ``K~`` on the modified plant plus a constant.

The closed forms assume orthonormal ``D12`` columns.  General plants are
first normalized by a block upper triangular input change that keeps the
undelayed and delayed groups apart; the compensators are mapped back, which
adds a pure delay tap to ``Pi~_u`` when ``D12`` couples the two groups.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .delay_blocks import DelayedSystem, FirBlock, assemble_pi_b, assemble_pi_u
from .errors import IllConditionedError, ValidationError
from .plant import GeneralizedPlant

SIGMA22_COND_LIMIT = 1e12


def _inv_sqrt(M: np.ndarray) -> np.ndarray:
    w, V = np.linalg.eigh(0.5 * (M + M.T))
    if w.size and np.min(w) <= 1e-14 * max(1.0, np.max(np.abs(w))):
        raise ValidationError("D12^T D12 is singular")
    return (V / np.sqrt(w)) @ V.T


@dataclass(frozen=True, eq=False)
class InputNormalization:
    """Input change ``u = T u_n`` that makes ``D12 T`` orthonormal.

    With a split, ``T = [[R00, -G Rtt], [0, Rtt]]`` where ``R00`` and ``Rtt``
    are symmetric inverse square roots; without one, ``T = M^{-1/2}``.
    """

    T: np.ndarray
    R00: np.ndarray
    Rtt: np.ndarray
    G: np.ndarray

    @property
    def block_diagonal(self) -> np.ndarray:
        return sla.block_diag(self.R00, self.Rtt)


def normalize_d12(P: GeneralizedPlant, n_undelayed: int | None = None
                  ) -> tuple[GeneralizedPlant, InputNormalization]:
    """Rescale control inputs so that ``D12`` has orthonormal columns.

    Parameters
    ----------
    P : GeneralizedPlant
    n_undelayed : int, optional
        Size of the undelayed input group.  When omitted (or equal to the
        total input size) the symmetric root ``(D12^T D12)^{-1/2}`` is used.
        Otherwise the change of variables is block upper triangular so the
        undelayed inputs never mix with the delayed ones.

    Returns
    -------
    normalized plant, transform
        ``u_original = transform.T @ u_normalized``.
    """
    m = P.m
    m0 = m if n_undelayed is None else int(n_undelayed)
    if not 0 < m0 <= m:
        raise ValidationError("the undelayed group must be nonempty")
    D0, Dt = P.D12[:, :m0], P.D12[:, m0:]
    M00 = D0.T @ D0
    R00 = _inv_sqrt(M00)
    G = np.linalg.solve(M00, D0.T @ Dt)
    Dtp = Dt - D0 @ G
    Rtt = _inv_sqrt(Dtp.T @ Dtp) if m > m0 else np.zeros((0, 0))
    T = np.block([[R00, -G @ Rtt], [np.zeros((m - m0, m0)), Rtt]])
    Pn = P.with_inputs(P.B2 @ T, P.D12 @ T)
    return Pn, InputNormalization(T, R00, Rtt, G)


def build_hamiltonian(P: GeneralizedPlant, n_undelayed: int) -> np.ndarray:
    """Hamiltonian of the undelayed-input subproblem (normalized ``D12``)."""
    m0 = int(n_undelayed)
    A, C1 = P.A, P.C1
    B0, D0 = P.B2[:, :m0], P.D12[:, :m0]
    P0 = D0 @ D0.T
    Pt = np.eye(P.nz) - P0
    return np.block([[A - B0 @ D0.T @ C1, -B0 @ B0.T],
                     [-C1.T @ Pt @ C1, -A.T + C1.T @ D0 @ B0.T]])


def sigma_exp(H: np.ndarray, tau: float) -> np.ndarray:
    """``exp(H tau)`` by scaling and squaring with a degree-13 Pade approximant."""
    if tau < 0:
        raise ValidationError("tau must be nonnegative")
    return sla.expm(H * tau)


@dataclass(frozen=True, eq=False)
class GammaResult:
    """Output of :func:`gamma`.

    Attributes
    ----------
    modified_plant : GeneralizedPlant
        Plant with ``B2``, ``C1`` (and, if ``D12`` couples the groups,
        ``D12``) replaced; the controller for it is designed as usual.
    pi_u, pi_b : DelayedSystem
        Input and measurement compensators.
    fir : FirBlock or None
        Stacked ``[Pi~_u; Pi~_b]`` FIR part acting on the delayed channels
        (``None`` when no channel is delayed).
    tap : ndarray
        Gain of the pure delay term in ``Pi~_u``.
    sigma, hamiltonian : ndarray
        ``exp(H tau)`` and ``H`` in normalized coordinates.
    xi_correction : ndarray
        ``(Sigma22^{-1} Sigma21)^T``; subtracting it from the modified
        Riccati solution gives the delayed cost-to-go matrix.
    normalization : InputNormalization
    """

    modified_plant: GeneralizedPlant
    pi_u: DelayedSystem
    pi_b: DelayedSystem
    fir: FirBlock | None
    tap: np.ndarray
    sigma: np.ndarray
    hamiltonian: np.ndarray
    xi_correction: np.ndarray
    normalization: InputNormalization
    n_undelayed: int
    n_delayed: int
    tau: float
    sigma22_cond: float

    @property
    def fir_u(self) -> FirBlock | None:
        return None if self.fir is None else FirBlock(self.fir.A, self.fir.B, self.fir.C[:self.n_undelayed], self.tau)

    @property
    def fir_b(self) -> FirBlock | None:
        return None if self.fir is None else FirBlock(self.fir.A, self.fir.B, self.fir.C[self.n_undelayed:], self.tau)


def gamma(P: GeneralizedPlant, n_undelayed: int, tau: float) -> GammaResult:
    """Loop-shifting transform for inputs ``[u0; u_tau]``.

    Parameters
    ----------
    P : GeneralizedPlant
        Plant whose first ``n_undelayed`` inputs act immediately and whose
        remaining inputs act after ``tau`` seconds.
    n_undelayed : int
    tau : float

    Raises
    ------
    IllConditionedError
        If ``Sigma22`` has condition number above ``1e12``; reduce ``tau``.
    """
    if tau < 0:
        raise ValidationError("tau must be nonnegative")
    m0 = int(n_undelayed)
    mt = P.m - m0
    n = P.n
    Pn, norm = normalize_d12(P, m0)
    H = build_hamiltonian(Pn, m0)
    Sig = sigma_exp(H, tau)
    p = P.p
    if mt == 0 or tau == 0:
        zero = np.zeros((n, n))
        return GammaResult(P, assemble_pi_u(None, m0, mt, tau), assemble_pi_b(None, m0, mt, tau, n_out=p),
                           None, np.zeros((m0, mt)), Sig, H, zero, norm, m0, mt, float(tau),
                           float(np.linalg.cond(Sig[n:, n:])))
    S12, S21, S22 = Sig[:n, n:], Sig[n:, :n], Sig[n:, n:]
    cond = float(np.linalg.cond(S22))
    if not np.isfinite(cond) or cond > SIGMA22_COND_LIMIT:
        raise IllConditionedError(f"Sigma22 condition number {cond:.2e} is too large; reduce tau")
    A, C1 = P.A, P.C1
    B0n, D0n = Pn.B2[:, :m0], Pn.D12[:, :m0]
    Btn, Dtn = Pn.B2[:, m0:], Pn.D12[:, m0:]
    P0 = D0n @ D0n.T
    Pt = np.eye(P.nz) - P0
    B2t_n = np.hstack([B0n, S12.T @ C1.T @ Dtn + S22.T @ Btn])
    C1t = np.linalg.solve(S22, (Pt @ C1 + P0 @ C1 @ S22.T - D0n @ B0n.T @ S21.T).T).T
    Rd_inv = np.linalg.inv(norm.block_diagonal)
    B2t = B2t_n @ Rd_inv
    D12t = Pn.D12 @ Rd_inv
    modified = GeneralizedPlant(A, P.B1, B2t, C1t, D12t, P.C2, P.D21)

    Rtt_inv = np.linalg.inv(norm.Rtt)
    BF = np.vstack([Btn, -C1.T @ Dtn]) @ Rtt_inv
    CF = np.vstack([norm.R00 @ np.hstack([D0n.T @ C1, B0n.T]),
                    np.hstack([P.C2, np.zeros((p, n))])])
    fir = FirBlock(H, BF, CF, tau)
    tap = -norm.G
    pi_u = assemble_pi_u(FirBlock(H, BF, CF[:m0], tau), m0, mt, tau, tap=tap)
    pi_b = assemble_pi_b(FirBlock(H, BF, CF[m0:], tau), m0, mt, tau)
    xi_corr = np.linalg.solve(S22, S21).T
    return GammaResult(modified, pi_u, pi_b, fir, tap, Sig, H, xi_corr, norm, m0, mt, float(tau), cond)


__all__ = [
    "InputNormalization",
    "normalize_d12",
    "build_hamiltonian",
    "sigma_exp",
    "GammaResult",
    "gamma",
]
