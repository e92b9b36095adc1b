import pytest

from .helpers import quiet_growth_law, small_phantom_config


@pytest.fixture
def phantom_cfg():
    return small_phantom_config()


@pytest.fixture
def growth_law():
    return quiet_growth_law()
