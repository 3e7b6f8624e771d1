import numpy as np
import pytest

from biphoton_simulator.config import SimulationConfig, get_settings
from biphoton_simulator.params import DopplerModel, FieldParams, SystemParams


@pytest.fixture
def sys_params():
    return SystemParams()


@pytest.fixture
def fields():
    return FieldParams()


@pytest.fixture
def doppler_off():
    return DopplerModel(enabled=False)


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


@pytest.fixture
def quiet_settings(monkeypatch):
    monkeypatch.setenv("BIPHOTON_SHOW_PROGRESS", "false")
    monkeypatch.setenv("BIPHOTON_MAX_CONCURRENT", "2")
    get_settings.cache_clear()
    yield get_settings()
    get_settings.cache_clear()


@pytest.fixture
def config():
    return SimulationConfig()


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: statistical checks repeated over many seeds")
