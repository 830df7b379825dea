"""Session fixtures: the demonstrator model is expensive, build it once."""

from __future__ import annotations

import sys
from pathlib import Path
from types import SimpleNamespace

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from plateopt import (builtin_config_path, generate, load_model,
                      resample_to_mesh, sweep)


@pytest.fixture(scope="session")
def demo_model():
    return load_model(builtin_config_path("demonstrator-alu"))


@pytest.fixture(scope="session")
def demo_system(demo_model):
    return demo_model.assemble()


@pytest.fixture(scope="session")
def demo_matrix(demo_model, demo_system):
    return sweep(demo_system, demo_model.sets, unit=demo_model.unit,
                 direction=demo_model.direction, workers=2)


@pytest.fixture(scope="session")
def planted(demo_model, demo_system, demo_matrix):
    """Forward-solved target with known loads, resampled onto eval nodes."""
    result = generate(demo_model.target, system=demo_system)
    vector = resample_to_mesh(result.field, demo_system.mesh,
                              nodes=demo_matrix.eval_nodes)
    return SimpleNamespace(field=result.field, true_loads=result.true_loads,
                           vector=vector)
