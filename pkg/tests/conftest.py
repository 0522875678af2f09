import random
from dataclasses import replace

import pytest

from coexsim.scenario import load_scenario


@pytest.fixture
def short():
    """Bundled scenario shortened to a given horizon in microseconds."""

    def make(name, horizon=1_000_000, **kw):
        return replace(load_scenario(name), horizon=horizon, **kw)

    return make


@pytest.fixture
def rng():
    return random.Random(12345)
