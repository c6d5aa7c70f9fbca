import time
from pathlib import Path

import numpy as np
import pytest

import pivoplan
from pivoplan.harness import DEFAULT_ANGLES, ExperimentSpec, PlanCache, run_desk, run_shelf
from pivoplan.scene import load_scene

DATA = Path(pivoplan.__file__).parent / "data"
DESK = DATA / "desk.yaml"
SHELF = DATA / "shelf.yaml"

ANGLES = DEFAULT_ANGLES
FREE_COL = len(ANGLES) - 1


def angle_index(a):
    return ANGLES.index(a)


@pytest.fixture(scope="session")
def desk_scene():
    return load_scene(DESK)


@pytest.fixture(scope="session")
def shelf_scene():
    return load_scene(SHELF)


class GridCache:
    """Feasibility grids computed once per session (planning is the slow part)."""

    def __init__(self):
        self._desk = {}
        self._shelf = {}
        self.seconds = {}  # ("desk" | "shelf", height, pivoting) -> wall time of the computation

    def desk(self, height, pivoting=True):
        key = (round(height, 3), pivoting)
        if key not in self._desk:
            spec = ExperimentSpec("desk", str(DESK), heights=(height,), pivoting_enabled=pivoting)
            t0 = time.perf_counter()
            self._desk[key] = run_desk(spec, write=False)[height]
            self.seconds[("desk",) + key] = time.perf_counter() - t0
        return self._desk[key]

    def shelf(self, height, pivoting=True):
        key = (round(height, 3), pivoting)
        if key not in self._shelf:
            spec = ExperimentSpec("shelf", str(SHELF), heights=(height,), pivoting_enabled=pivoting)
            t0 = time.perf_counter()
            matrices, executions = run_shelf(spec, write=False, execute_free=pivoting)
            self.seconds[("shelf",) + key] = time.perf_counter() - t0
            self._shelf[key] = (matrices[height], executions)
        return self._shelf[key]


@pytest.fixture(scope="session")
def grids():
    return GridCache()


@pytest.fixture(scope="session")
def shelf_plans(shelf_scene):
    return PlanCache(shelf_scene)


def random_unit(rng):
    v = rng.normal(size=3)
    return v / np.linalg.norm(v)

