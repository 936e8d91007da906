"""Bridge server configuration."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

DEFAULT_CHECKPOINT = "facebook/sam2-hiera-large"


@dataclass(frozen=True)
class BridgeConfig:
    checkpoint: str = DEFAULT_CHECKPOINT
    host: str = "127.0.0.1"
    port: int = 8080
    image_root: Path | None = None
    scene_file: Path | None = None  # set -> echo mode, no neural model
    max_concurrency: int = 4

    def __post_init__(self):
        if self.image_root is not None and not Path(self.image_root).is_dir():
            raise FileNotFoundError(f"image root {self.image_root} does not exist")
        if self.max_concurrency < 1:
            raise ValueError("max_concurrency must be >= 1")
