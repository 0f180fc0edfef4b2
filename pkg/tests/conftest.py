from __future__ import annotations

import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from aniso_maximal import cover as C
from aniso_maximal.maximal import MaximalConfig


@pytest.fixture(scope="session")
def iso1():
    return C.isotropic(1)


@pytest.fixture(scope="session")
def iso2():
    return C.isotropic(2)


@pytest.fixture
def small_config():
    return MaximalConfig(t_min=-3.0, t_max=4.0, t_step=0.25)
