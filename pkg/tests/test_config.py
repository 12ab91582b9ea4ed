import json

import numpy as np
import pytest

from h2delay.config import bundled_example, config_from_dict, config_to_dict, load_config
from h2delay.errors import DimensionError, ValidationError
from h2delay.random_instances import oscillator_network


def test_round_trip(chain3):
    doc = json.loads(json.dumps(config_to_dict(chain3)))
    P = config_from_dict(doc).plant
    for name in ("A", "B1", "B2", "C1", "D12", "C2", "D21"):
        np.testing.assert_array_equal(getattr(P, name), getattr(chain3, name))
    assert P.graph == chain3.graph and P.tau == chain3.tau


def test_bundled_examples():
    cfg = load_config(bundled_example("diamond_oscillator"))
    ref = oscillator_network(tau=0.1)
    np.testing.assert_array_equal(cfg.plant.C1, ref.C1)
    assert cfg.plant.graph == ref.graph
    assert not load_config(bundled_example("four_node_cycle")).plant.graph.is_acyclic()
    with pytest.raises(ValidationError):
        bundled_example("missing")


def test_options_merge(chain3):
    doc = config_to_dict(chain3, {"grid": {"n": 7}})
    cfg = config_from_dict(doc)
    assert cfg.options["grid"] == {"n": 7, "lo": 1e-3, "hi": 1e3}
    assert cfg.grid.shape == (7,)
    assert cfg.options["riccati_tol"] == 1e-9


@pytest.mark.parametrize("mutate, error", [
    (lambda d: d.pop("agents"), ValidationError),
    (lambda d: d["agents"][0].update(A=[[1.0, 2.0]]), DimensionError),
    (lambda d: d["agents"][0].update(n=0), ValidationError),
    (lambda d: d["global"].update(C1=[[1.0]]), DimensionError),
    (lambda d: d["graph"].update(edges=[[1, 9]]), ValidationError),
    (lambda d: d["agents"][0].update(A=[["x"]]), ValidationError),
])
def test_invalid_documents(chain3, mutate, error):
    doc = json.loads(json.dumps(config_to_dict(chain3)))
    mutate(doc)
    with pytest.raises(error):
        config_from_dict(doc)


def test_unreadable_files(tmp_path):
    with pytest.raises(ValidationError):
        load_config(tmp_path / "none.json")
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ValidationError):
        load_config(bad)
