import csv
import io
import json

import numpy as np
import pytest

from h2delay.cli import dumps, main
from h2delay.config import bundled_example, config_to_dict, load_config
from h2delay.lti import default_grid, max_response_gap
from h2delay.random_instances import random_plant
from h2delay.synthesis import AgentController, aggregate_controllers, centralized_lqg, k_opt_delayed
from h2delay.topology import DiGraph

EX = "example:diamond_oscillator"


def _write(tmp_path, plant, name="p.json"):
    path = tmp_path / name
    path.write_text(dumps(config_to_dict(plant)))
    return str(path)


def _csv(text):
    return list(csv.reader(io.StringIO(text)))


def test_validate(capsys):
    assert main(["validate", EX]) == 0
    out = capsys.readouterr().out
    assert "status: pass" in out and "acyclic" in out
    assert main(["validate", "example:four_node_cycle"]) == 0
    assert "notice: cycles merge agents {1,2,3}" in capsys.readouterr().out


def test_validate_rejects_unstabilizable(tmp_path, capsys):
    P = random_plant(np.random.default_rng(0), 1, n_sizes=(1,), m_sizes=(1,), graph=DiGraph(1))
    doc = config_to_dict(P)
    doc["agents"][0]["A"] = [[1.0]]
    doc["agents"][0]["B2"] = [[0.0]]
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(doc))
    assert main(["validate", str(path)]) == 2
    assert "FAIL" in capsys.readouterr().out


def test_synthesize_round_trip(tmp_path, capsys):
    out = tmp_path / "ctl"
    assert main(["synthesize", EX, "--out", str(out)]) == 0
    P = load_config(bundled_example("diamond_oscillator")).plant
    agents = [AgentController.from_dict(json.loads((out / f"agent_{i}.json").read_text()))
              for i in range(1, 5)]
    K = k_opt_delayed(P)
    grid = default_grid(20, 1e-2, 1e2)
    # files carry 13 significant digits
    assert max_response_gap(K, aggregate_controllers(P, agents), grid) <= 1e-9


def test_synthesize_is_deterministic(tmp_path):
    for d in ("a", "b"):
        assert main(["synthesize", EX, "--agent", "2", "--tau", "0.3", "--out", str(tmp_path / d)]) == 0
    a = (tmp_path / "a" / "agent_2.json").read_bytes()
    assert a == (tmp_path / "b" / "agent_2.json").read_bytes()
    assert not (tmp_path / "a" / "agent_1.json").exists()
    assert b'"tau": 3.000000000000e-01' in a
    assert main(["synthesize", EX, "--agent", "7", "--out", str(tmp_path / "c")]) == 2


def test_single_agent_synthesis_is_lqg(tmp_path):
    P = random_plant(np.random.default_rng(1), 1, graph=DiGraph(1), tau=0.2)
    assert main(["synthesize", _write(tmp_path, P), "--out", str(tmp_path / "o")]) == 0
    a = AgentController.from_dict(json.loads((tmp_path / "o" / "agent_1.json").read_text()))
    K = aggregate_controllers(P, [a])
    assert max_response_gap(K, centralized_lqg(P), default_grid(20)) <= 1e-8


def test_cost(capsys, tmp_path):
    assert main(["cost", EX, "--json", str(tmp_path / "c.json")]) == 0
    rows = dict(_csv(capsys.readouterr().out)[1:])
    assert float(rows["J_cen"]) <= float(rows["J_dec"]) <= float(rows["J_decdel"])
    assert float(rows["margins_ok"]) == 1.0
    assert json.loads((tmp_path / "c.json").read_text())["J_cen"] == pytest.approx(float(rows["J_cen"]))


def test_sweep(capsys):
    assert main(["sweep", EX, "--tau-grid", "0:0.5:1", "--topologies", "full,diamond,empty"]) == 0
    rows = _csv(capsys.readouterr().out)
    assert rows[0] == ["topology", "tau", "J_analytic", "J_empirical"]
    assert len(rows) == 10
    J = {(r[0], float(r[1])): float(r[2]) for r in rows[1:]}
    for t in (0.0, 0.5, 1.0):
        assert J[("full", t)] <= J[("diamond", t)] <= J[("empty", t)]
    assert main(["sweep", EX, "--topologies", "star"]) == 2


def test_simulate(tmp_path):
    out = tmp_path / "sim.csv"
    assert main(["simulate", EX, "--x0", "1,0,0,0,0,0,-1,0", "--t-final", "1",
                 "--record-every", "10", "--out", str(out)]) == 0
    rows = _csv(out.read_text())
    assert rows[0][:3] == ["t", "x_1", "x_2"] and rows[0][-1] == "z_10"
    assert float(rows[1][1]) == 1.0
    assert main(["simulate", EX, "--x0", "1,2"]) == 2


def test_numerical_failure_exit_code(tmp_path):
    P = random_plant(np.random.default_rng(2), 2, graph=DiGraph(2, ((1, 2),)))
    doc = config_to_dict(P)
    for ag in doc["agents"]:
        ag["A"] = (np.array(ag["A"]) + 4 * np.eye(ag["n"])).tolist()
    doc["tau"] = 40.0
    path = tmp_path / "stiff.json"
    path.write_text(json.dumps(doc))
    assert main(["cost", str(path)]) == 3
