import numpy as np
import pytest

from skillforge import build_engine
from skillforge.config import EngineConfig


@pytest.fixture
def engine():
    return build_engine(EngineConfig(store_path=":memory:"))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
