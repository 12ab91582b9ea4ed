"""Problem configuration files.

A configuration is one JSON document::

    {
      "agents": [
        {"n": 2, "m": 1, "p": 2,
         "A": [[...]], "B1": [[...]], "B2": [[...]], "C2": [[...]], "D21": [[...]]},
        ...
      ],
      "global": {"C1": [[...]], "D12": [[...]]},
      "graph": {"edges": [[1, 2], [2, 3]]},
      "tau": 0.1,
      "options": {"riccati_tol": 1e-9,
                  "grid": {"n": 50, "lo": 1e-3, "hi": 1e3},
                  "sim": {"dt": null, "t_final": null}}
    }

Matrices are row-major nested lists; nodes are numbered from 1.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any

import numpy as np

from .errors import DimensionError, ValidationError
from .plant import Plant
from .topology import DiGraph

DEFAULT_OPTIONS: dict[str, Any] = {
    "riccati_tol": 1e-9,
    "grid": {"n": 50, "lo": 1e-3, "hi": 1e3},
    "sim": {"dt": None, "t_final": None, "max_steps": 400000, "record_every": 1},
}


@dataclass
class ProblemConfig:
    plant: Plant
    options: dict = field(default_factory=lambda: json.loads(json.dumps(DEFAULT_OPTIONS)))

    @property
    def grid(self) -> np.ndarray:
        g = self.options["grid"]
        return 1j * np.logspace(np.log10(g["lo"]), np.log10(g["hi"]), int(g["n"]))


def _matrix(value, name: str, shape: tuple[int, int]) -> np.ndarray:
    try:
        M = np.array(value, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"{name} is not a numeric matrix") from exc
    if M.size == 0 and 0 in shape:
        return np.zeros(shape)
    if M.ndim == 1 and shape[0] == 1:
        M = M.reshape(1, -1)
    if M.shape != shape:
        raise DimensionError(f"{name} has shape {M.shape}, expected {shape}")
    if not np.all(np.isfinite(M)):
        raise ValidationError(f"{name} has non-finite entries")
    return M


def _merge(base: dict, extra: dict) -> dict:
    out = dict(base)
    for k, v in extra.items():
        out[k] = _merge(out[k], v) if isinstance(v, dict) and isinstance(out.get(k), dict) else v
    return out


def config_from_dict(doc: dict) -> ProblemConfig:
    """Validate a parsed configuration and build the plant."""
    if not isinstance(doc, dict):
        raise ValidationError("configuration must be an object")
    agents = doc.get("agents")
    if not agents:
        raise ValidationError("configuration needs a nonempty 'agents' list")
    A, B1, B2, C2, D21 = [], [], [], [], []
    for k, ag in enumerate(agents, start=1):
        try:
            n, m, p = int(ag["n"]), int(ag["m"]), int(ag["p"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ValidationError(f"agent {k} needs integer n, m and p") from exc
        if min(n, m, p) < 1:
            raise ValidationError(f"agent {k} has a zero dimension")
        a = _matrix(ag.get("A"), f"agent {k} A", (n, n))
        b2 = _matrix(ag.get("B2"), f"agent {k} B2", (n, m))
        c2 = _matrix(ag.get("C2"), f"agent {k} C2", (p, n))
        b1 = np.array(ag.get("B1"), dtype=float)
        if b1.ndim != 2 or b1.shape[0] != n:
            raise DimensionError(f"agent {k} B1 must have {n} rows")
        d21 = _matrix(ag.get("D21"), f"agent {k} D21", (p, b1.shape[1]))
        A.append(a), B1.append(b1), B2.append(b2), C2.append(c2), D21.append(d21)
    n_tot = sum(a.shape[0] for a in A)
    m_tot = sum(b.shape[1] for b in B2)
    glob = doc.get("global") or {}
    C1 = np.array(glob.get("C1"), dtype=float)
    if C1.ndim != 2 or C1.shape[1] != n_tot:
        raise DimensionError(f"C1 must have {n_tot} columns")
    D12 = _matrix(glob.get("D12"), "D12", (C1.shape[0], m_tot))
    N = len(agents)
    graph_doc = doc.get("graph") or {}
    edges = graph_doc.get("edges", [])
    try:
        edges = tuple((int(a), int(b)) for a, b in edges)
    except (TypeError, ValueError) as exc:
        raise ValidationError("graph edges must be pairs of node numbers") from exc
    graph = DiGraph(N, edges)
    tau = float(doc.get("tau", 0.0))
    plant = Plant.from_blocks(A, B1, B2, C2, D21, C1, D12, graph, tau)
    options = _merge(DEFAULT_OPTIONS, doc.get("options") or {})
    return ProblemConfig(plant, options)


def load_config(path: str | Path) -> ProblemConfig:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: invalid JSON ({exc})") from exc
    except OSError as exc:
        raise ValidationError(f"{path}: cannot read ({exc})") from exc
    return config_from_dict(doc)


def config_to_dict(plant: Plant, options: dict | None = None) -> dict:
    """Inverse of :func:`config_from_dict`."""
    agents = []
    for i in range(1, plant.N + 1):
        agents.append({
            "n": plant.n_parts.sizes[i - 1], "m": plant.m_parts.sizes[i - 1],
            "p": plant.p_parts.sizes[i - 1],
            **{k: plant.block(k, i).tolist() for k in ("A", "B1", "B2", "C2", "D21")},
        })
    return {
        "agents": agents,
        "global": {"C1": plant.C1.tolist(), "D12": plant.D12.tolist()},
        "graph": {"edges": [list(e) for e in plant.graph.edges]},
        "tau": plant.tau,
        "options": options if options is not None else DEFAULT_OPTIONS,
    }


def bundled_example(name: str) -> Path:
    """Path of a configuration shipped with the package."""
    p = resources.files("h2delay") / "data" / f"{name}.json"
    if not p.is_file():
        raise ValidationError(f"no bundled example named {name!r}")
    return Path(str(p))


__all__ = ["ProblemConfig", "DEFAULT_OPTIONS", "config_from_dict", "load_config",
           "config_to_dict", "bundled_example"]
