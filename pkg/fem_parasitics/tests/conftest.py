"""Pytest configuration for FEM Parasitics tests."""

import logging

import pytest

# Setup basic logging for the test session
logging.basicConfig(level=logging.INFO, format="%(asctime)s - %(levelname)s - %(name)s:%(lineno)d - %(message)s")
logger = logging.getLogger(__name__)


def pytest_addoption(parser):
    """Add command-line options to pytest."""
    parser.addoption(
        "--run-acceptance",
        action="store_true",
        default=False,
        help="Run the desk-scale accuracy suites (minutes per test)",
    )


def pytest_configure(config):
    """Configure pytest with custom markers."""
    config.addinivalue_line("markers", "acceptance: desk-scale accuracy test against analytic references")


def pytest_collection_modifyitems(config, items):
    """Skip acceptance tests unless --run-acceptance is specified."""
    if not config.getoption("--run-acceptance"):
        skip_acceptance = pytest.mark.skip(reason="Need --run-acceptance option to run")
        for item in items:
            if "acceptance" in item.keywords:
                item.add_marker(skip_acceptance)
