"""HTTP bridge exposing a promptable segmenter behind POST /v1/segment."""

from .app import canonical_json, create_app
from .config import DEFAULT_CHECKPOINT, BridgeConfig
from .models import EchoModel, RealCheckpointModel, build_point_prompts, load_scene_store

__version__ = "0.1.0"
