from pathlib import Path

import numpy as np
import pytest

from qdmoo.problem import LinearProjection, toy_sphere_problem

CONFIG_DIR = Path(__file__).resolve().parents[1] / "src" / "qdmoo" / "configs"


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def sphere():
    return toy_sphere_problem(4, 2)


@pytest.fixture
def lp32():
    return LinearProjection(32, 4)


@pytest.fixture
def config_dir():
    return CONFIG_DIR
