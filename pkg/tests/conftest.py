import os

import numpy as np
import pytest
from hypothesis import settings

from vecsim.config import ScenarioConfig, desk_config

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture
def cfg():
    return ScenarioConfig()


@pytest.fixture
def desk():
    return desk_config()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
