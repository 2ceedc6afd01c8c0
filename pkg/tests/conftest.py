import numpy as np
import pytest

from amfir import SyntheticSpec, generate_synthetic, init_heads


@pytest.fixture(scope="session")
def small_dataset():
    """Quick 6-class, 8-dim benchmark for unit tests."""
    return generate_synthetic(
        SyntheticSpec(num_classes=6, per_class=12, dim_rgb=8, dim_flow=8, seed=3)
    )


@pytest.fixture(scope="session")
def default_dataset():
    """The default benchmark used by the acceptance suite."""
    return generate_synthetic(SyntheticSpec(seed=0))


@pytest.fixture()
def rng():
    return np.random.default_rng(12345)


@pytest.fixture()
def small_model():
    return init_heads(8, 8, 4, np.random.default_rng(7))
