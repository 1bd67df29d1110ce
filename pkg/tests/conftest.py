import numpy as np
import pytest
import torch

from relight.config import desk_scale
from relight.synthetic import toy_corpus

# keep multi-worker nondeterminism out of the numeric tests
torch.set_num_threads(max(1, torch.get_num_threads()))

try:
    from hypothesis import settings

    settings.register_profile("suite", deadline=None, max_examples=25)
    settings.load_profile("suite")
except ImportError:
    pass


def tiny_config(**overrides):
    """Smallest config that still exercises every code path."""
    values = dict(resolution=32, base_channels=8, style_channels=8,
                  mapper_hidden=32, disc_channels=8, enh_channels=16,
                  enh_growth=8, pool_size=16, style_dim=3)
    values.update(overrides)
    return desk_scale(**values)


@pytest.fixture(scope="session")
def tiny_cfg():
    return tiny_config()


@pytest.fixture(scope="session")
def desk_cfg():
    return desk_scale()


@pytest.fixture(scope="session")
def corpus32():
    return toy_corpus(3, 4, size=32)


@pytest.fixture(scope="session")
def corpus64():
    return toy_corpus(7, 8, size=64)


@pytest.fixture()
def rng():
    return np.random.default_rng(0)
