import json
from pathlib import Path

import pytest

from segbridge import BridgeConfig, EchoModel, create_app
from segbridge.models import load_scene_store

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture(scope="session")
def golden_scene_path():
    return FIXTURES / "golden_scene.json"


@pytest.fixture(scope="session")
def golden_request():
    return json.loads((FIXTURES / "golden_request.json").read_text())


@pytest.fixture(scope="session")
def golden_response_bytes():
    return (FIXTURES / "golden_response.json").read_bytes()


@pytest.fixture(scope="session")
def golden_health_bytes():
    return (FIXTURES / "golden_health.json").read_bytes()


@pytest.fixture
def echo_app(golden_scene_path):
    cfg = BridgeConfig(scene_file=golden_scene_path)
    model = EchoModel(load_scene_store(golden_scene_path))
    return create_app(cfg, model)
