import numpy as np
import pytest

from fdivlab.catalog import BUILTIN_NAMES, builtin


@pytest.fixture(params=BUILTIN_NAMES)
def spec(request):
    return builtin(request.param)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
