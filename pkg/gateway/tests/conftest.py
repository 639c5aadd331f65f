"""Shared fixtures: one generated scenario suite and an app around it."""
import pytest
from starlette.testclient import TestClient

from tarot.scenarios import generate_scenarios
from tarot_gateway.app import create_app
from tarot_gateway.config import GatewayConfig


@pytest.fixture(scope="session")
def suite_dir(tmp_path_factory):
    root = tmp_path_factory.mktemp("suite")
    generate_scenarios(root, seed=7, count=12)
    return root


@pytest.fixture(scope="session")
def config(suite_dir):
    return GatewayConfig(scenarios=str(suite_dir))


@pytest.fixture(scope="session")
def app(config):
    return create_app(config)


@pytest.fixture(scope="session")
def client(app):
    return TestClient(app)


@pytest.fixture(scope="session")
def scenarios(app):
    return app.state.gateway.library.scenarios
