"""Command line front end.

Commands::

    h2delay validate   CONFIG
    h2delay synthesize CONFIG [--agent I] [--tau T] [--out DIR]
    h2delay cost       CONFIG [--tau T] [--json FILE]
    h2delay sweep      CONFIG [--tau-grid G] [--topologies LIST] [--empirical] [--out FILE]
    h2delay simulate   CONFIG [--x0 LIST] [--t-final T] [--dt DT] [--out FILE]

``CONFIG`` is a JSON file (see :mod:`h2delay.config`) or ``example:NAME``
for a bundled example.  Exit status is 0 on success, 2 for invalid input
and 3 for numerical failures.
"""

from __future__ import annotations

import argparse
import io
import json
import math
import sys
from pathlib import Path
from typing import Sequence

import numpy as np

from .config import ProblemConfig, bundled_example, load_config
from .errors import NumericalError, ValidationError
from .riccati import check_riccati_assumptions

EXIT_OK, EXIT_INVALID, EXIT_NUMERICAL = 0, 2, 3
FLOAT_FMT = "%.12e"


# ----------------------------------------------------------------------------
# Deterministic text output
# ----------------------------------------------------------------------------


def _fmt_float(v: float) -> str:
    v = float(v)
    if math.isnan(v):
        return "NaN"
    if math.isinf(v):
        return "Infinity" if v > 0 else "-Infinity"
    return FLOAT_FMT % v


def dumps(obj, indent: int = 0) -> str:
    """JSON text with every float printed as ``%.12e``."""
    pad = "  " * indent
    if isinstance(obj, bool) or obj is None:
        return json.dumps(obj)
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return _fmt_float(obj)
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, np.ndarray):
        return dumps(obj.tolist(), indent)
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        if all(not isinstance(x, (list, tuple, dict, np.ndarray)) for x in obj):
            return "[" + ", ".join(dumps(x) for x in obj) + "]"
        inner = ",\n".join(pad + "  " + dumps(x, indent + 1) for x in obj)
        return "[\n" + inner + "\n" + pad + "]"
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        inner = ",\n".join(pad + "  " + json.dumps(str(k)) + ": " + dumps(v, indent + 1)
                           for k, v in obj.items())
        return "{\n" + inner + "\n" + pad + "}"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _csv_rows(header: Sequence[str], rows) -> str:
    buf = io.StringIO()
    buf.write(",".join(header) + "\n")
    for row in rows:
        buf.write(",".join(v if isinstance(v, str) else _fmt_float(v) for v in row) + "\n")
    return buf.getvalue()


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


# ----------------------------------------------------------------------------
# Commands
# ----------------------------------------------------------------------------


def _load(arg: str, tau: float | None = None) -> ProblemConfig:
    path = bundled_example(arg.split(":", 1)[1]) if arg.startswith("example:") else arg
    cfg = load_config(path)
    if tau is not None:
        cfg.plant = cfg.plant.with_tau(tau)
    return cfg


def cmd_validate(args) -> int:
    from .topology import condense_cycles, is_multitree

    cfg = _load(args.config)
    P = cfg.plant
    tol = float(cfg.options["riccati_tol"])
    grid = np.concatenate([[0.0], np.abs(cfg.grid.imag)])
    ok = True
    lines = []
    d = check_riccati_assumptions(P.A, P.B2, P.C1, P.D12, grid=grid, tol=tol)
    lines.append("control: " + ("ok" if d.ok else "FAIL " + "; ".join(d.failures())))
    ok &= d.ok
    for i in range(1, P.N + 1):
        d = check_riccati_assumptions(P.block("A", i).T, P.block("C2", i).T, P.block("B1", i).T,
                                      P.block("D21", i).T, grid=grid, tol=tol)
        lines.append(f"estimation agent {i}: " + ("ok" if d.ok else "FAIL " + "; ".join(d.failures())))
        ok &= d.ok
    G = P.graph
    lines.append(f"graph: {G.node_count} nodes, {len(G.edges)} edges, "
                 + ("acyclic" if G.is_acyclic() else "cyclic"))
    if G.is_acyclic():
        lines.append("multitree: " + ("yes" if is_multitree(G) else "no"))
    else:
        _, groups = condense_cycles(G)
        merged = [g for g in groups if len(g) > 1]
        lines.append("notice: cycles merge agents " + ", ".join("{" + ",".join(map(str, g)) + "}"
                                                             for g in merged)
                     + "; agents in one cycle share descendant sets, synthesis proceeds directly")
    lines.append(f"tau: {_fmt_float(P.tau)}")
    lines.append("status: " + ("pass" if ok else "fail"))
    sys.stdout.write("\n".join(lines) + "\n")
    return EXIT_OK if ok else EXIT_INVALID


def cmd_synthesize(args) -> int:
    from .synthesis import agent_controllers

    cfg = _load(args.config, args.tau)
    P = cfg.plant
    agents = agent_controllers(P)
    if args.agent is not None:
        if not 1 <= args.agent <= P.N:
            raise ValidationError(f"agent must be in 1..{P.N}")
        agents = [agents[args.agent - 1]]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for a in agents:
        path = out / f"agent_{a.index}.json"
        path.write_text(dumps(a.to_dict()) + "\n")
        sys.stdout.write(f"{path}\n")
    return EXIT_OK


def cmd_cost(args) -> int:
    from .cost import cost_report

    cfg = _load(args.config, args.tau)
    rep = cost_report(cfg.plant)
    rows = rep.rows() + [("margins_ok", 1.0 if rep.margins.ok() else 0.0)]
    sys.stdout.write(_csv_rows(["quantity", "value"], [(k, v) for k, v in rows]))
    if args.json:
        Path(args.json).write_text(dumps(rep.to_dict()) + "\n")
    return EXIT_OK


def _parse_grid(text: str) -> list[float]:
    if ":" in text:
        a, step, b = (float(x) for x in text.split(":"))
        if step <= 0:
            raise ValidationError("grid step must be positive")
        k = int(math.floor((b - a) / step + 1e-9))
        return [round(a + i * step, 12) for i in range(k + 1)]
    return [float(x) for x in text.split(",") if x.strip()]


def _topologies(names: str, cfg: ProblemConfig) -> dict:
    from .random_instances import diamond_graph
    from .topology import DiGraph

    N = cfg.plant.N
    out = {}
    for name in (s.strip() for s in names.split(",") if s.strip()):
        if name == "config":
            out[name] = cfg.plant.graph
        elif name == "full":
            out[name] = DiGraph.complete(N)
        elif name == "empty":
            out[name] = DiGraph.empty(N)
        elif name == "chain":
            out[name] = DiGraph.chain(N)
        elif name == "diamond":
            if N != 4:
                raise ValidationError("the diamond topology needs four agents")
            out[name] = diamond_graph()
        else:
            raise ValidationError(f"unknown topology {name!r}")
    return out


def _sim_config(cfg: ProblemConfig, dt=None, t_final=None, record_every=None):
    from .delay_sim import SimConfig

    s = dict(cfg.options.get("sim") or {})
    if dt is not None:
        s["dt"] = dt
    if t_final is not None:
        s["t_final"] = t_final
    if record_every is not None:
        s["record_every"] = record_every
    keys = {"dt", "t_final", "max_steps", "record_every"}
    return SimConfig(**{k: v for k, v in s.items() if k in keys and v is not None})


def cmd_sweep(args) -> int:
    from .delay_sim import tau_sweep

    cfg = _load(args.config)
    taus = _parse_grid(args.tau_grid)
    tops = _topologies(args.topologies, cfg)
    rows = tau_sweep(cfg.plant, taus, tops, empirical=args.empirical,
                     cfg=_sim_config(cfg) if args.empirical else None)
    for r in rows:
        if r.status != "ok":
            sys.stderr.write(f"{r.topology} tau={r.tau}: {r.status}\n")
    _emit(_csv_rows(["topology", "tau", "J_analytic", "J_empirical"],
                    [(r.topology, r.tau, r.J_analytic, r.J_empirical) for r in rows]), args.out)
    return EXIT_OK


def cmd_simulate(args) -> int:
    from .delay_sim import simulate
    from .synthesis import agent_controllers

    cfg = _load(args.config, args.tau)
    P = cfg.plant
    x0 = np.zeros(P.n) if args.x0 is None else np.array(_parse_grid(args.x0))
    if x0.size != P.n:
        raise ValidationError(f"--x0 needs {P.n} values")
    tr = simulate(P, agent_controllers(P), _sim_config(cfg, args.dt, args.t_final, args.record_every),
                  x0=x0)
    header = (["t"] + [f"x_{k}" for k in range(1, P.n + 1)] + [f"u_{k}" for k in range(1, P.m + 1)]
              + [f"z_{k}" for k in range(1, P.nz + 1)])
    data = np.hstack([tr.t[:, None], tr.signal("x"), tr.signal("u"), tr.signal("z")])
    _emit(_csv_rows(header, data), args.out)
    return EXIT_OK


# ----------------------------------------------------------------------------
# Entry point
# ----------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="h2delay", description="Optimal structured control with "
                                "communication delays.")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("validate", help="check solvability assumptions and the graph")
    s.add_argument("config")
    s.set_defaults(func=cmd_validate)

    s = sub.add_parser("synthesize", help="write per-agent controller files")
    s.add_argument("config")
    s.add_argument("--agent", type=int, default=None)
    s.add_argument("--tau", type=float, default=None)
    s.add_argument("--out", default="controllers")
    s.set_defaults(func=cmd_synthesize)

    s = sub.add_parser("cost", help="optimal costs and ordering margins")
    s.add_argument("config")
    s.add_argument("--tau", type=float, default=None)
    s.add_argument("--json", default=None)
    s.set_defaults(func=cmd_cost)

    s = sub.add_parser("sweep", help="optimal cost over delays and topologies")
    s.add_argument("config")
    s.add_argument("--tau-grid", default="0:0.05:1")
    s.add_argument("--topologies", default="full,config,empty")
    s.add_argument("--empirical", action="store_true")
    s.add_argument("--out", default=None)
    s.set_defaults(func=cmd_sweep)

    s = sub.add_parser("simulate", help="closed-loop trajectory")
    s.add_argument("config")
    s.add_argument("--x0", default=None)
    s.add_argument("--t-final", type=float, default=None)
    s.add_argument("--dt", type=float, default=None)
    s.add_argument("--tau", type=float, default=None)
    s.add_argument("--record-every", type=int, default=None)
    s.add_argument("--out", default=None)
    s.set_defaults(func=cmd_simulate)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ValidationError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_INVALID
    except (NumericalError, np.linalg.LinAlgError) as exc:
        sys.stderr.write(f"numerical failure: {exc}\n")
        return EXIT_NUMERICAL


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
