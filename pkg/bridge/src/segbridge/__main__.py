"""Server entry point: python -m segbridge [--echo-scene scene.json | --checkpoint id]."""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import uvicorn

from .app import create_app
from .config import DEFAULT_CHECKPOINT, BridgeConfig
from .models import EchoModel, RealCheckpointModel, load_scene_store


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="segbridge", description=__doc__)
    parser.add_argument("--checkpoint", default=DEFAULT_CHECKPOINT)
    parser.add_argument("--image-root", type=Path, default=None)
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, default=int(os.environ.get("PORT", "8080")))
    parser.add_argument("--echo-scene", type=Path, default=None,
                        help="scene JSON; serves the deterministic echo model instead of a checkpoint")
    parser.add_argument("--max-concurrency", type=int, default=4)
    args = parser.parse_args(argv)

    cfg = BridgeConfig(
        checkpoint=args.checkpoint,
        host=args.host,
        port=args.port,
        image_root=args.image_root,
        scene_file=args.echo_scene,
        max_concurrency=args.max_concurrency,
    )
    if cfg.scene_file is not None:
        model = EchoModel(load_scene_store(cfg.scene_file))
    else:
        model = RealCheckpointModel(cfg.checkpoint, cfg.image_root)
    uvicorn.run(create_app(cfg, model), host=cfg.host, port=cfg.port, log_level="warning")
    return 0


if __name__ == "__main__":
    sys.exit(main())
