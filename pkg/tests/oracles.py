"""Independent reference computations shared by the tests."""

import warnings

import numpy as np
from scipy.integrate import quad


def h2_by_quadrature(fun, breaks=(0.0, 0.3, 1.0, 3.0, 10.0, 100.0, 1000.0)):
    """``(1/pi) * integral_0^inf ||fun(jw)||_F^2 dw`` for real systems."""
    f = lambda w: np.linalg.norm(fun(1j * w), "fro") ** 2
    total = sum(quad(f, a, b, limit=800, epsrel=1e-11)[0] for a, b in zip(breaks[:-1], breaks[1:]))
    with warnings.catch_warnings():
        # the oscillatory tail is tiny; quad may still flag it
        warnings.simplefilter("ignore")
        total += quad(f, breaks[-1], np.inf, limit=400)[0]
    return total / np.pi


def lft_point(Gs, nz, nw, K):
    """Lower LFT of a sampled four-block plant with a sampled controller."""
    P11, P12 = Gs[:nz, :nw], Gs[:nz, nw:]
    P21, P22 = Gs[nz:, :nw], Gs[nz:, nw:]
    return P11 + P12 @ K @ np.linalg.solve(np.eye(P22.shape[0]) - P22 @ K, P21)


# acceptance lines collected during the run, printed in the terminal summary
ACCEPTANCE_LINES: dict[str, str] = {}


def record(name: str, ok: bool, detail: str) -> None:
    line = f"{name} {'PASS' if ok else 'FAIL'}: {detail}"
    ACCEPTANCE_LINES[name] = line
    print(line)
