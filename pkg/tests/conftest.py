import random

import pytest

from ocsim.model import generate_default_scenario


@pytest.fixture
def scenario():
    return generate_default_scenario(seed=1)


@pytest.fixture
def rng():
    return random.Random("ocsim-tests")
