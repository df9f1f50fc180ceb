import numpy as np
import pytest

from tagfm import autodiff as ad


@pytest.fixture
def f64():
    """Run a test in 64-bit checked mode, restoring defaults afterwards."""
    with ad.precision("f64"):
        yield


@pytest.fixture
def rng():
    return np.random.Generator(np.random.PCG64(1234))
