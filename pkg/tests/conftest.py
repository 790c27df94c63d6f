import os

import numpy as np
import pytest

from qos_mcp.core.plant import ScenarioRun, ScenarioSpec, run_scenario
from qos_mcp.core.statespace import StateSpaceModel
from qos_mcp.utils.yaml_utils import load_scenario

SCENARIO_DIR = os.path.join(os.path.dirname(os.path.dirname(__file__)), "qos_mcp", "scenarios")
BURST_SCENARIO = os.path.join(SCENARIO_DIR, "burst_two_class.yml")
QUIET_SCENARIO = os.path.join(SCENARIO_DIR, "quiet_two_class.yml")


@pytest.fixture
def burst_path() -> str:
    return BURST_SCENARIO


@pytest.fixture
def quiet_path() -> str:
    return QUIET_SCENARIO


@pytest.fixture(scope="session")
def burst_spec() -> ScenarioSpec:
    return load_scenario(BURST_SCENARIO)


@pytest.fixture(scope="session")
def burst_run(burst_spec) -> ScenarioRun:
    return run_scenario(burst_spec)


@pytest.fixture(scope="session")
def quiet_spec() -> ScenarioSpec:
    return load_scenario(QUIET_SCENARIO)


@pytest.fixture
def make_spec():
    """Build a ScenarioSpec from plain dicts; every class gets a constant source unless given one."""

    def build(capacity=100.0, ticks=50, classes=None, controller=None, seed=0):
        classes = classes or [
            {"class_id": "a", "priority": 1, "initial_width": 50, "critical_min_width": 10},
            {"class_id": "b", "priority": 2, "initial_width": 50, "critical_min_width": 10},
        ]
        document = {
            "channel": {"capacity": capacity, "ticks": ticks, "seed": seed},
            "classes": [{"source": {"kind": "constant", "rate": 10}, **c} for c in classes],
        }
        if controller is not None:
            document["controller"] = controller
        return ScenarioSpec.model_validate(document)

    return build


@pytest.fixture
def two_state_model() -> StateSpaceModel:
    return StateSpaceModel(A=[[0.5, 0.1], [0.0, 0.8]], B=[[1.0], [0.0]])


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
