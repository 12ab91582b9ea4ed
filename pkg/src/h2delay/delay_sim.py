"""Fixed-step simulation of delayed closed loops.

The simulator works on a :class:`~h2delay.delay_blocks.DelayedSystem`

    x' = A0 x + A1 x(t - tau) + B0 w + B1 w(t - tau)
    z  = C0 x + C1 x(t - tau) + D0 w + D1 w(t - tau)

with a step ``dt`` that divides ``tau``.  The state is advanced by RK4 and
the delayed state is read from a ring buffer through cubic Hermite
interpolation, so no step straddles a discontinuity (they all sit at
multiples of ``tau``).  FIR substates have unstable internal modes that
cancel only in exact arithmetic; after every step they are recomputed from
the buffered input history by exact quadrature of the Hermite interpolant.

The H2 norm is the summed energy of the impulse responses of all
disturbance channels, integrated channel-parallel in one run.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np
import scipy.linalg as sla

from .delay_blocks import DelayedSystem, SignalBuilder
from .errors import NumericalError, ValidationError
from .lti import StateSpace
from .plant import Plant
from .synthesis import AgentController, wire_agents
from .topology import DiGraph

_GAUSS4 = np.polynomial.legendre.leggauss(4)
_GAUSS8 = np.polynomial.legendre.leggauss(8)


def _hermite(s: float) -> tuple[float, float, float, float]:
    s2 = s * s
    s3 = s2 * s
    return (2 * s3 - 3 * s2 + 1, s3 - 2 * s2 + s, -2 * s3 + 3 * s2, s3 - s2)


# ----------------------------------------------------------------------------
# Configuration and history
# ----------------------------------------------------------------------------


@dataclass(frozen=True)
class SimConfig:
    """Step and horizon settings.

    Parameters
    ----------
    dt : float, optional
        Requested step.  It is reduced until ``tau / dt`` is an integer,
        ``dt <= tau / steps_per_delay`` and ``dt <= stiffness / rho(A0)``.
    t_final : float, optional
        Horizon.  Defaults to ``horizon_factor / alpha`` where ``-alpha`` is
        the spectral abscissa of the rational part of the closed loop.
    max_steps : int
        Hard cap on the number of steps.
    record_every : int
        Keep every ``record_every``-th grid point in the trajectory.
    energy_rtol : float
        Impulse runs stop early once two consecutive windows each carry
        less than this fraction of the accumulated energy.
    """

    dt: float | None = None
    t_final: float | None = None
    max_steps: int = 400_000
    record_every: int = 1
    steps_per_delay: int = 20
    stiffness: float = 0.1
    horizon_factor: float = 40.0
    max_dt: float = 0.05
    energy_rtol: float = 1e-13
    integrator: str = "rk4"

    def __post_init__(self):
        if self.integrator != "rk4":
            raise ValidationError("only the fixed-step RK4 integrator is available")
        if self.dt is not None and self.dt <= 0:
            raise ValidationError("dt must be positive")
        if self.t_final is not None and self.t_final <= 0:
            raise ValidationError("t_final must be positive")

    def step_for(self, G: DelayedSystem) -> tuple[float, int]:
        """Resolved ``(dt, tau / dt)`` for ``G``."""
        rho = float(np.max(np.abs(np.linalg.eigvals(G.A0)))) if G.n_states else 0.0
        cap = self.max_dt if self.dt is None else self.dt
        if rho > 0:
            cap = min(cap, self.stiffness / rho)
        if G.tau > 0:
            cap = min(cap, G.tau / self.steps_per_delay)
            K = int(math.ceil(G.tau / cap - 1e-9))
            return G.tau / K, K
        return cap, 0

    def horizon_for(self, G: DelayedSystem) -> float:
        if self.t_final is not None:
            return float(self.t_final)
        alpha = decay_rate(G)
        if not np.isfinite(alpha) or alpha <= 0:
            return 200.0 * max(1.0, G.tau)
        return self.horizon_factor / alpha


def decay_rate(G: DelayedSystem) -> float:
    """``-max Re(eig)`` of ``A0 + A1`` with FIR substates removed."""
    keep = np.ones(G.n_states, dtype=bool)
    for t in G.fir_tags:
        keep[t.slice] = False
    A = (G.A0 + G.A1)[np.ix_(keep, keep)]
    if A.size == 0:
        return math.inf
    return float(-np.max(np.linalg.eigvals(A).real))


class DelayLine:
    """Ring buffer of the last ``length`` samples with zero initial history.

    ``read(lag)`` returns the sample pushed ``lag`` pushes ago (``lag = 0``
    is the newest).  Before enough samples exist it returns zeros.
    """

    def __init__(self, length: int, shape: tuple[int, ...]):
        if length < 1:
            raise ValidationError("a delay line needs at least one slot")
        self.length = int(length)
        self._buf = np.zeros((self.length,) + tuple(shape))
        self._head = -1

    def push(self, sample: np.ndarray) -> None:
        self._head = (self._head + 1) % self.length
        self._buf[self._head] = sample

    def read(self, lag: int) -> np.ndarray:
        if not 0 <= lag < self.length:
            raise ValidationError("lag outside the buffer")
        return self._buf[(self._head - lag) % self.length]

    def chronological(self) -> np.ndarray:
        """All samples, oldest first."""
        return np.roll(self._buf, -(self._head + 1), axis=0)


# ----------------------------------------------------------------------------
# FIR reset by quadrature
# ----------------------------------------------------------------------------


class _FirReset:
    """Exact value of one FIR substate from its input history.

    ``q(t) = int_{t - tau}^{t} exp(A (t - s - tau)) B v(s) ds`` where ``v``
    is interpolated by cubic Hermite polynomials on each step.
    """

    def __init__(self, tag, dt: float, K: int):
        A, B = tag.A, tag.B
        self.tag = tag
        self.K = K
        nf, qf = B.shape
        self.E = np.array([sla.expm(-A * p * dt) for p in range(K + 1)])
        x, w = _GAUSS8
        th = 0.5 * dt * (x + 1.0)
        wt = 0.5 * dt * w
        Phi = np.zeros((4, nf, qf))
        for tk, wk in zip(th, wt):
            eB = sla.expm(-A * tk) @ B
            for j, h in enumerate(_hermite(tk / dt)):
                Phi[j] += wk * h * eB
        # M[f, p, j, q] = E[p] Phi[j]
        M = np.einsum("pab,jbq->apjq", self.E[:K], Phi)
        self.M = M.reshape(nf, K * 4 * qf)
        self.dt = dt
        self.impulse = A.shape[0] and np.any(tag.Ku != 0)

    def value(self, hist: np.ndarray, new: np.ndarray) -> np.ndarray:
        """``hist``: (K, 4, qf, c) oldest first; ``new``: (4, qf, c).

        Each sample holds ``(v_left, v_right, dv_left, dv_right)``.
        """
        W = np.concatenate([hist, new[None]], axis=0)
        K, dt = self.K, self.dt
        C = np.stack([W[:K, 1], dt * W[:K, 3], W[1:, 0], dt * W[1:, 2]], axis=1)
        return self.M @ C.reshape(-1, C.shape[-1])


# ----------------------------------------------------------------------------
# Core integrator
# ----------------------------------------------------------------------------


@dataclass
class Trajectory:
    """Recorded grid values (right limits) of the system outputs."""

    t: np.ndarray
    outputs: np.ndarray
    energy: float
    tail: float
    dt: float
    steps: int
    layout: Mapping[str, slice] = field(default_factory=dict)

    def signal(self, name: str) -> np.ndarray:
        return self.outputs[:, self.layout[name]]


class _Runner:
    def __init__(self, G: DelayedSystem, cfg: SimConfig, channels: int):
        self.G = G
        self.cfg = cfg
        self.dt, self.K = cfg.step_for(G)
        self.c = channels
        tau = G.tau
        if self.K == 0:
            # no delay: fold the delayed matrices into the undelayed ones
            self.A0, self.A1 = G.A0 + G.A1, np.zeros_like(G.A1)
            self.B0, self.B1 = G.B0 + G.B1, np.zeros_like(G.B1)
            self.C0, self.C1 = G.C0 + G.C1, np.zeros_like(G.C1)
            self.D0, self.D1 = G.D0 + G.D1, np.zeros_like(G.D1)
        else:
            self.A0, self.A1, self.B0, self.B1 = G.A0, G.A1, G.B0, G.B1
            self.C0, self.C1, self.D0, self.D1 = G.C0, G.C1, G.D0, G.D1
        self.has_A1 = bool(np.any(self.A1 != 0))
        self.has_C1 = bool(np.any(self.C1 != 0))
        self.tau = tau
        self.firs = [_FirReset(t, self.dt, self.K) for t in G.fir_tags] if self.K else []
        for f in self.firs:
            for g in self.firs:
                if np.any(f.tag.Kx[:, g.tag.slice] != 0):
                    raise ValidationError("FIR inputs may not depend on FIR states")

    # derivative with delayed state and inputs supplied
    def f(self, X, Xd, w, wd):
        out = self.A0 @ X
        if self.has_A1:
            out = out + self.A1 @ Xd
        if w is not None:
            out = out + self.B0 @ w + self.B1 @ wd
        return out

    def run(self, X0: np.ndarray, steps: int, w_fun: Callable | None = None,
            impulse: bool = False, energy_rows=None, record_every: int = 1,
            early_stop: bool = False):
        n, c, K, dt = self.G.n_states, self.c, self.K, self.dt
        L = max(K, 1) + 1
        hist = DelayLine(L, (4, n, c))
        vlines = [DelayLine(L, (4, f.tag.B.shape[1], c)) for f in self.firs]
        rows = slice(None) if energy_rows is None else energy_rows
        C0z, C1z = self.C0[rows], self.C1[rows]
        D0z, D1z = self.D0[rows], self.D1[rows]
        if impulse and (np.any(D0z != 0) or (K and np.any(D1z != 0))):
            raise ValidationError("impulse energy is infinite with direct feedthrough")
        eps = 1e-9 * dt

        def w_at(t, left=False):
            if w_fun is None:
                return None
            tt = t - eps if left else t
            return np.zeros((self.B0.shape[1], c)) if tt < 0 else np.asarray(w_fun(tt), float).reshape(-1, c)

        def dw_at(t, left=False):
            if w_fun is None:
                return None
            h = 1e-3 * dt
            if left:
                return (w_at(t, True) - w_at(t - h, True)) / h
            return (w_at(t + h) - w_at(t)) / h

        def delayed_w(t, left=False):
            return w_at(t - self.tau, left) if K else w_at(t, left)

        # the buffer holds points n-K .. n after pushing point n (L = K + 1)
        def xd_at(s):
            if not K:
                return 0.0
            a = hist.read(K)
            b = hist.read(K - 1)
            h = _hermite(s)
            return h[0] * a[1] + h[1] * dt * a[3] + h[2] * b[0] + h[3] * dt * b[2]

        def vsample(f, XL, XR, DL, DR, tL, tR):
            Kx, Ku = f.tag.Kx, f.tag.Ku
            vL, vR, dL, dR = Kx @ XL, Kx @ XR, Kx @ DL, Kx @ DR
            if w_fun is not None and np.any(Ku != 0):
                vL = vL + Ku @ w_at(tL, True)
                vR = vR + Ku @ w_at(tR)
                dL = dL + Ku @ dw_at(tL, True)
                dR = dR + Ku @ dw_at(tR)
            return np.stack([vL, vR, dL, dR])

        # ---- point 0
        XR = np.array(X0, dtype=float).reshape(n, c)
        XL = np.zeros((n, c))
        if not impulse:
            for f in self.firs:
                XR[f.tag.slice] = 0.0
        zero_hist = np.zeros((n, c))
        wd0 = delayed_w(0.0)
        DR = self.f(XR, zero_hist, w_at(0.0), wd0)
        DL = np.zeros((n, c))
        hist.push(np.stack([XL, XR, DL, DR]))
        for f, vl in zip(self.firs, vlines):
            vl.push(vsample(f, XL, XR, DL, DR, 0.0, 0.0) * np.array([0, 1, 0, 1])[:, None, None])

        n_out = self.C0.shape[0]
        rec_t = [0.0]
        rec_y = []

        def output(X, Xd, t, left=False):
            y = self.C0 @ X
            if self.has_C1:
                y = y + self.C1 @ Xd
            if w_fun is not None:
                y = y + self.D0 @ w_at(t, left) + self.D1 @ delayed_w(t, left)
            return y

        rec_y.append(output(XR, hist.read(K)[1] if K else None, 0.0))
        gx, gw = _GAUSS4
        gs = 0.5 * (gx + 1.0)
        gw = 0.5 * dt * gw
        energy = 0.0
        win_len = max(K, int(round(1.0 / (max(decay_rate(self.G), 1e-3) * dt))), 50)
        win_energy = [0.0]
        scale = max(1.0, float(np.max(np.abs(XR))) if XR.size else 1.0)
        steps_done = 0
        tail = 0.0
        for step in range(steps):
            t = step * dt
            t1 = t + dt
            w1 = w_at(t)
            wh = w_at(t + 0.5 * dt)
            w4 = w_at(t1, True)
            wd1 = delayed_w(t)
            wdh = delayed_w(t + 0.5 * dt)
            wd4 = delayed_w(t1, True)
            Xd0, Xdh, Xd1 = xd_at(0.0), xd_at(0.5), xd_at(1.0)
            k1 = self.f(XR, Xd0, w1, wd1)
            k2 = self.f(XR + 0.5 * dt * k1, Xdh, wh, wdh)
            k3 = self.f(XR + 0.5 * dt * k2, Xdh, wh, wdh)
            k4 = self.f(XR + dt * k3, Xd1, w4, wd4)
            Xn = XR + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
            # delayed point for t1 is n+1-K, currently hist.read(K-1)
            if K:
                dpt = hist.read(K - 1)
                xdL, xdR = dpt[0], dpt[1]
            else:
                xdL = xdR = None
            DLn = self.f(Xn, xdL, w4, wd4)
            if self.firs:
                for _ in range(2):
                    for f, vl in zip(self.firs, vlines):
                        Kx, Ku = f.tag.Kx, f.tag.Ku
                        vL = Kx @ Xn
                        dL = Kx @ DLn
                        if w_fun is not None and np.any(Ku != 0):
                            vL = vL + Ku @ w_at(t1, True)
                            dL = dL + Ku @ dw_at(t1, True)
                        new = np.stack([vL, np.zeros_like(vL), dL, np.zeros_like(dL)])
                        q = f.value(vl.chronological()[1:], new)
                        p = step + 1
                        if impulse and f.impulse and p <= K:
                            q = q + f.E[K - p] @ f.tag.B @ f.tag.Ku
                        Xn[f.tag.slice] = q
                    DLn = self.f(Xn, xdL, w4, wd4)
            XRn = Xn
            if impulse and K and step + 1 == K:
                XRn = Xn + self.B1
            w1n = w_at(t1)
            wd1n = delayed_w(t1)
            DRn = self.f(XRn, xdR, w1n, wd1n)
            # energy over [t, t1]
            if c:
                e = 0.0
                for s, wt in zip(gs, gw):
                    h = _hermite(s)
                    X = h[0] * XR + h[1] * dt * DR + h[2] * Xn + h[3] * dt * DLn
                    z = C0z @ X
                    if K and self.has_C1:
                        z = z + C1z @ xd_at(s)
                    if w_fun is not None:
                        ts = t + s * dt
                        z = z + D0z @ w_at(ts) + D1z @ delayed_w(ts)
                    e += wt * float(np.sum(z * z))
                energy += e
                win_energy[-1] += e
            hist.push(np.stack([Xn, XRn, DLn, DRn]))
            for f, vl in zip(self.firs, vlines):
                vl.push(vsample(f, Xn, XRn, DLn, DRn, t1, t1))
            XR, DR = XRn, DRn
            steps_done = step + 1
            if not np.all(np.isfinite(XR)) or np.max(np.abs(XR)) > 1e10 * scale:
                raise NumericalError(f"simulation diverged at t = {t1:.6g}")
            if steps_done % record_every == 0:
                rec_t.append(t1)
                rec_y.append(output(XR, hist.read(K)[1] if K else None, t1))
            if steps_done % win_len == 0:
                if early_stop and len(win_energy) >= 2 and t1 > 4 * self.tau:
                    tol = self.cfg.energy_rtol * max(energy, 1e-300)
                    if win_energy[-1] < tol and win_energy[-2] < tol:
                        break
                win_energy.append(0.0)
        if len(win_energy) >= 3:
            E1, E2 = win_energy[-3], win_energy[-2]
            if E1 > 0 and E2 < E1:
                r = E2 / E1
                tail = E2 * r / (1 - r)
            elif E2 > 0:
                tail = math.inf
        return np.array(rec_t), np.array(rec_y), energy, tail, steps_done


# ----------------------------------------------------------------------------
# Closed loops
# ----------------------------------------------------------------------------


def closed_loop(plant: Plant, controllers) -> tuple[DelayedSystem, dict[str, slice]]:
    """Interconnect the plant with agent controllers or a controller ``y -> u``.

    Returns
    -------
    system : DelayedSystem
        Input ``w``; outputs stacked as ``z, x, u, y`` followed by every
        transmitted command ``v_i_j``.
    layout : dict
        Output slices by name.  The plant state occupies the first ``n``
        states of ``system``.
    """
    b = SignalBuilder(plant.tau)
    w = b.input(plant.nw)
    x = b.state(plant.n)
    y = plant.C2 @ x + plant.D21 @ w
    sent = {}
    if isinstance(controllers, (StateSpace, DelayedSystem)):
        K = controllers
        Kd = K if isinstance(K, DelayedSystem) else DelayedSystem.from_statespace(K, plant.tau)
        if Kd.shape != (plant.m, plant.p):
            raise ValidationError(f"controller must map {plant.p} measurements to {plant.m} inputs")
        u = b.subsystem(Kd, y)
    else:
        u, sent = wire_agents(b, plant, list(controllers), y)
    b.set_derivative(x, plant.A @ x + plant.B1 @ w + plant.B2 @ u)
    z = plant.C1 @ x + plant.D12 @ u
    outs = [("z", z), ("x", x), ("u", u), ("y", y)]
    for (i, j) in sorted(sent):
        outs.append((f"v_{i}_{j}", sent[(i, j)]))
    layout = {}
    pos = 0
    for name, sig in outs:
        layout[name] = slice(pos, pos + sig.dim)
        pos += sig.dim
    return b.build([w], [s for _, s in outs]), layout


def simulate_system(G: DelayedSystem | StateSpace, cfg: SimConfig | None = None,
                    w: Callable[[float], np.ndarray] | None = None,
                    x0: np.ndarray | None = None) -> Trajectory:
    """Simulate ``G`` from state ``x0`` (zero history) under input ``w(t)``.

    ``w`` returns the input vector at ``t >= 0``; it is taken as zero
    before ``t = 0``.
    """
    cfg = cfg or SimConfig()
    if isinstance(G, StateSpace):
        G = DelayedSystem.from_statespace(G)
    run = _Runner(G, cfg, 1)
    T = cfg.horizon_for(G)
    steps = min(int(math.ceil(T / run.dt - 1e-9)), cfg.max_steps)
    X0 = np.zeros((G.n_states, 1)) if x0 is None else np.asarray(x0, float).reshape(-1, 1)
    if X0.shape[0] != G.n_states:
        raise ValidationError(f"x0 needs {G.n_states} entries")
    t, Y, energy, tail, done = run.run(X0, steps, w_fun=w, record_every=cfg.record_every)
    return Trajectory(t, Y[..., 0], energy, tail, run.dt, done)


def simulate(plant: Plant, controllers, cfg: SimConfig | None = None,
             w: Callable[[float], np.ndarray] | None = None,
             x0: np.ndarray | None = None) -> Trajectory:
    """Simulate the closed loop of ``plant`` and its controllers.

    Parameters
    ----------
    plant : Plant
    controllers : list of AgentController, or StateSpace / DelayedSystem
    cfg : SimConfig
    w : callable, optional
        Disturbance ``w(t)``; zero when omitted.
    x0 : ndarray, optional
        Initial plant state; controller states start at zero.
    """
    G, layout = closed_loop(plant, controllers)
    full = np.zeros(G.n_states)
    if x0 is not None:
        x0 = np.asarray(x0, float).ravel()
        if x0.size != plant.n:
            raise ValidationError(f"x0 needs {plant.n} entries")
        full[:plant.n] = x0
    if w is None:
        zero = np.zeros(plant.nw)
        w = lambda t: zero  # noqa: E731
    tr = simulate_system(G, cfg, w, full)
    tr.layout = layout
    return tr


@dataclass(frozen=True)
class H2Estimate:
    """Impulse-response energy with its truncation estimate."""

    value: float
    tail: float
    t_final: float
    dt: float
    steps: int

    def __float__(self) -> float:
        return self.value


def empirical_h2_sq(system, controllers=None, cfg: SimConfig | None = None) -> H2Estimate:
    """Squared H2 norm from simulated impulse responses.

    ``system`` is either a plant (then ``controllers`` closes the loop and
    the energy of ``z`` is measured) or a strictly proper delayed or
    rational system.
    """
    cfg = cfg or SimConfig()
    rows = None
    if isinstance(system, Plant):
        if controllers is None:
            raise ValidationError("controllers are required to close the loop")
        G, layout = closed_loop(system, controllers)
        rows = layout["z"]
    elif isinstance(system, StateSpace):
        G = DelayedSystem.from_statespace(system)
    else:
        G = system
    run = _Runner(G, cfg, G.n_inputs)
    T = cfg.horizon_for(G)
    steps = min(int(math.ceil(T / run.dt - 1e-9)), cfg.max_steps)
    X0 = G.B0.copy()
    _, _, energy, tail, done = run.run(X0, steps, impulse=True, energy_rows=rows,
                                       record_every=max(steps, 1), early_stop=True)
    total = energy + (tail if np.isfinite(tail) else 0.0)
    return H2Estimate(total, tail, done * run.dt, run.dt, done)


# ----------------------------------------------------------------------------
# Sweeps
# ----------------------------------------------------------------------------


@dataclass(frozen=True)
class SweepRow:
    topology: str
    tau: float
    J_analytic: float
    J_empirical: float
    status: str = "ok"


def tau_sweep(plant: Plant, taus: Sequence[float], topologies: Mapping[str, DiGraph],
              empirical: bool = False, cfg: SimConfig | None = None) -> list[SweepRow]:
    """Optimal cost over a grid of delays for several communication graphs.

    Synthesis failures at a point are recorded in ``status`` and do not
    stop the sweep.
    """
    from .cost import cost_dec_delayed
    from .synthesis import agent_controllers

    rows = []
    for name, graph in topologies.items():
        for tau in taus:
            P = plant.with_graph(graph).with_tau(float(tau))
            try:
                J = cost_dec_delayed(P)
                Je = math.nan
                if empirical:
                    Je = empirical_h2_sq(P, agent_controllers(P), cfg).value
                rows.append(SweepRow(name, float(tau), J, Je))
            except (NumericalError, ValidationError, np.linalg.LinAlgError) as exc:
                rows.append(SweepRow(name, float(tau), math.nan, math.nan,
                                     f"failed: {type(exc).__name__}: {exc}"))
    return rows


__all__ = [
    "SimConfig", "DelayLine", "Trajectory", "H2Estimate", "SweepRow",
    "decay_rate", "closed_loop", "simulate_system", "simulate", "empirical_h2_sq", "tau_sweep",
]
