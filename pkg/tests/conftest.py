import sys

import numpy as np
import pytest

from advworkbench import kernels
from advworkbench.data import default_split, generate_synthetic, split
from advworkbench.models import init_params, reference_specs
from advworkbench.train import TrainConfig, train


@pytest.fixture(params=kernels.available_backends())
def backend(request):
    previous = kernels.use_backend(request.param)
    yield request.param
    kernels.use_backend(previous)


@pytest.fixture(scope="session")
def synthetic_splits():
    ds = generate_synthetic()
    return ds, split(ds, default_split(ds, 0))


@pytest.fixture(scope="session")
def trained_student(synthetic_splits):
    _, (tr, va, te) = synthetic_splits
    model = init_params(reference_specs()["student-cnn"], 0)
    model, history = train(model, tr, va, TrainConfig(epochs=10))
    return model, history


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    acceptance = sys.modules.get("test_acceptance")
    if acceptance is None or not acceptance.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for text in acceptance.summary_lines():
        terminalreporter.write_line(text)
