"""Shared fixtures: one radio config and one service region cover most tests."""

import numpy as np
import pytest

from passloc import RadioConfig, ServiceRegion


@pytest.fixture(scope="session")
def radio():
    return RadioConfig(frequency=28e9)


@pytest.fixture(scope="session")
def region():
    return ServiceRegion(30.0, 30.0, 2.0)


@pytest.fixture(scope="session")
def half_wave(radio):
    return radio.wavelength / 2.0


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance: end-to-end acceptance gate")


@pytest.fixture
def rng():
    return np.random.default_rng(0)
