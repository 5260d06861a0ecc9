import numpy as np
import pytest
from hypothesis import settings

from qcfd.beats import make_dataset
from qcfd.dsp import preprocess

settings.register_profile("default", deadline=None, max_examples=40)
settings.load_profile("default")


@pytest.fixture(scope="session")
def desk_set():
    """64 beats per class, preprocessed with the desk profile."""
    return preprocess(make_dataset(64, seed=11))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
