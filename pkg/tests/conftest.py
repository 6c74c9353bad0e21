import json
from pathlib import Path

import numpy as np
import pytest

from rodmap import RodShapeSource, default_actuation_map, generate_library
from rodmap.scenario import Scenario

DESK_ACTUATION = {
    "curvature_matrix": [[8.0, 0.0, 0.0], [0.0, 6.0, 6.0], [0.0, 4.0, -4.0]],
    "extension_coeffs": [0.12, 0.12, 0.12],
}


@pytest.fixture(scope="session")
def amap():
    return default_actuation_map()


@pytest.fixture(scope="session")
def small_lib(amap):
    """200 shapes on a coarse grid — shared by graph/cost/planner tests."""
    source = RodShapeSource(amap, length=1.0, n_z=25)
    return generate_library(source, n=200, n_z=25, seed=1234)


def make_scenario_doc(tmp_path: Path, *, size=300, n_z=30, seed=5, k=6,
                      obstacles=(), start=None, goal=None, waypoints=(),
                      name="test", **extra) -> Path:
    """Write a small desk-scale scenario file and return its path."""
    doc = {
        "schema_version": 1,
        "name": name,
        "rod": {"length": 0.3, "n_z": n_z, "actuation": DESK_ACTUATION},
        "library": {"size": size, "seed": seed},
        "graph": {"k": k},
        "obstacles": list(obstacles),
        "start": start or {"gamma": [-0.1, 0.0, 0.0]},
        "goal": goal or {"gamma": [-1.2, -0.7, -0.3]},
        "waypoints": list(waypoints),
    }
    doc.update(extra)
    path = tmp_path / f"{name}.json"
    path.write_text(json.dumps(doc))
    return path


@pytest.fixture()
def scenario_file(tmp_path):
    return make_scenario_doc(tmp_path)


@pytest.fixture()
def rng():
    return np.random.default_rng(987)
