import numpy as np
import pytest

from egan import dataset as ds
from egan import models


@pytest.fixture(scope="session")
def tiny_config():
    """Smallest legal network, used wherever quality does not matter."""
    return models.NetworkConfig(
        n_attributes=4,
        latent_dim=6,
        resolution=32,
        base_channels=4,
        feature_dim_d=12,
        feature_dim_c=12,
        connection_hidden=(16,),
    )


@pytest.fixture(scope="session")
def tiny_state(tiny_config):
    return models.init_params(tiny_config, seed=3)


@pytest.fixture(scope="session")
def small_dataset():
    return ds.generate_synthetic_dataset(ds.SyntheticConfig(n_images=64, seed=1))


@pytest.fixture(scope="session")
def small_batch(small_dataset):
    return ds.sample_batch(small_dataset, 16, np.random.default_rng(5))
