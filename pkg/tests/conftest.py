import os

import pytest

from src.data_access.count_data import CountData

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
DATA = os.path.join(ROOT, "data")
CONFIG = os.path.join(ROOT, "config")


def data_path(*parts) -> str:
    return os.path.join(DATA, *parts)


def config_path(name: str) -> str:
    return os.path.join(CONFIG, name)


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: closed-loop simulations taking several seconds")


@pytest.fixture(scope="session")
def counts():
    return CountData()


@pytest.fixture(scope="session")
def run1_table(counts):
    return counts.read_coincidences(data_path("run1", "coincidences.json"))


@pytest.fixture(scope="session")
def run2_table(counts):
    return counts.read_coincidences(data_path("run2", "coincidences.json"))


@pytest.fixture(scope="session")
def run1_singles(counts):
    return counts.read_singles(data_path("run1", "singles.json"))


@pytest.fixture(scope="session")
def run1_budget(counts):
    return counts.read_rates(data_path("run1", "rates.json"))


@pytest.fixture(scope="session")
def run2_budget(counts):
    return counts.read_rates(data_path("run2", "rates.json"))
