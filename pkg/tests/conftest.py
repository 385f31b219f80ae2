from __future__ import annotations

import numpy as np
import pytest

from structhinf import load_fixture


@pytest.fixture(scope="session")
def example1():
    return load_fixture("example1")


@pytest.fixture(scope="session")
def example1_full():
    return load_fixture("example1_full")


@pytest.fixture(scope="session")
def platoon():
    return load_fixture("platoon")


@pytest.fixture()
def rng():
    return np.random.default_rng(0)
