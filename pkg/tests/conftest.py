"""
Test configuration and fixtures
"""

import shutil
import tempfile
from pathlib import Path

import numpy as np
import pytest

from hydrolimit.core.config import Settings
from hydrolimit.core.logger import setup_logger
from hydrolimit.services.glauber_rates import default_model, design_rates
from hydrolimit.services.lattice_core import LocalWindow
from hydrolimit.services.traveling_wave import solve_wave


def pytest_addoption(parser):
    """Add custom command line options"""
    parser.addoption(
        "--runslow", action="store_true", default=False, help="run slow tests"
    )
    parser.addoption(
        "--runintegration", action="store_true", default=False, help="run integration tests"
    )


def pytest_collection_modifyitems(config, items):
    """Mark tests by directory"""
    for item in items:
        path = str(item.fspath)
        if "unit" in path:
            item.add_marker(pytest.mark.unit)
        elif "integration" in path:
            item.add_marker(pytest.mark.integration)


def pytest_runtest_setup(item):
    if "slow" in item.keywords and not item.config.getoption("--runslow"):
        pytest.skip("need --runslow option to run slow tests")
    if "integration" in item.keywords and not item.config.getoption("--runintegration"):
        pytest.skip("need --runintegration option to run integration tests")


@pytest.fixture(scope="session")
def test_dir():
    """Create a temporary directory for tests"""
    temp_dir = Path(tempfile.mkdtemp())
    yield temp_dir
    shutil.rmtree(temp_dir, ignore_errors=True)


@pytest.fixture(scope="session")
def test_settings(test_dir):
    """Settings writing logs and runs under the temporary directory"""
    settings = Settings()
    settings.output.output_dir = str(test_dir / "runs")
    settings.output.log_dir = str(test_dir / "logs")
    settings.processing.parallel_workers = 1
    settings.processing.show_progress = False
    return settings


@pytest.fixture(scope="session")
def test_logger(test_settings):
    return setup_logger(name="hydrolimit_test", log_file=test_settings.get_log_path(), level="DEBUG")


@pytest.fixture(scope="session")
def default_cubic():
    """f(u) = 32 (u - 0.25)(0.75 - u)(u - 0.45), wave speed 0.4"""
    return default_model()


@pytest.fixture(scope="session")
def default_rates(default_cubic):
    return design_rates(default_cubic, LocalWindow(1, 1))


@pytest.fixture(scope="session")
def default_wave(default_cubic):
    return solve_wave(default_cubic, Z=40.0)


@pytest.fixture
def rng():
    return np.random.Generator(np.random.Philox(12345))


@pytest.fixture
def run_root(tmp_path):
    """Output root for harness runs"""
    return tmp_path / "runs"
