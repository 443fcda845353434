import numpy as np
import pytest

from roughflow.densitylab import yamato_fields
from roughflow.fbm import HurstParam, TimeGrid, sample_fbm


@pytest.fixture(scope="session")
def yamato():
    return yamato_fields()


@pytest.fixture(scope="session")
def rough_hurst():
    return HurstParam(0.4)


@pytest.fixture(scope="session")
def grid65():
    return TimeGrid(1.0, 65)


@pytest.fixture(scope="session")
def fbm_path_d3(rough_hurst, grid65):
    """One 3-component driver shared by the flow tests."""
    return sample_fbm(rough_hurst, grid65, d=3, n_paths=1, seed=21)[0]


@pytest.fixture(scope="session")
def fbm_path_d2(rough_hurst, grid65):
    return sample_fbm(rough_hurst, grid65, d=2, n_paths=1, seed=3)[0]


@pytest.fixture()
def rng():
    return np.random.default_rng(12345)
