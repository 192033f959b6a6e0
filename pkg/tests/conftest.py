import numpy as np
import pytest

from diar.autodiff import set_default_dtype


@pytest.fixture(autouse=True)
def float64_default():
    # numeric verification runs at 64-bit; training tests opt into f32 themselves
    set_default_dtype(np.float64)
    yield
    set_default_dtype(np.float64)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
