import numpy as np
import pytest

from ranlab.schemas.network import PropagationParams
from ranlab.services.network import build_layout
from ranlab.services.neural import DenseNet


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run slow acceptance tests")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def params():
    return PropagationParams()


@pytest.fixture
def layout21():
    return build_layout(1, 500.0, seed=1)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def linear_net(W, b) -> DenseNet:
    W = np.atleast_2d(np.asarray(W, dtype=float))
    b = np.asarray(b, dtype=float)
    return DenseNet(layer_sizes=[W.shape[1], W.shape[0]], activations=["linear"], weights=[W], biases=[b])


@pytest.fixture(autouse=True)
def _isolated_settings(monkeypatch):
    for var in ("RANLAB_OUTPUT_DIR", "RANLAB_JOBS", "RANLAB_LOG_LEVEL"):
        monkeypatch.delenv(var, raising=False)
