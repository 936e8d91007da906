"""Optional real-checkpoint smoke test; needs the torch stack, the checkpoint,
and ideally a GPU. Enabled explicitly via SEGBRIDGE_REAL_SMOKE=1."""

import os

import numpy as np
import pytest

requires_real = pytest.mark.skipif(
    os.environ.get("SEGBRIDGE_REAL_SMOKE") != "1",
    reason="set SEGBRIDGE_REAL_SMOKE=1 to run the real-checkpoint smoke test",
)


@requires_real
def test_real_checkpoint_single_segment(tmp_path):
    from fastapi.testclient import TestClient
    from PIL import Image

    from segbridge import BridgeConfig, RealCheckpointModel, create_app

    image_root = tmp_path / "images"
    image_root.mkdir()
    arr = np.zeros((128, 128, 3), dtype=np.uint8)
    arr[32:96, 32:96] = (200, 30, 30)  # a red square on black
    Image.fromarray(arr).save(image_root / "test.png")

    cfg = BridgeConfig(image_root=image_root)
    model = RealCheckpointModel(cfg.checkpoint, cfg.image_root)
    client = TestClient(create_app(cfg, model))

    health = client.get("/v1/health").json()
    assert health["status"] == "ok"
    assert health["model"] == cfg.checkpoint

    r = client.post("/v1/segment", json={
        "image": {"id": "test.png"},
        "box": [30.0, 30.0, 98.0, 98.0],
        "pos_points": [[64.0, 64.0]],
        "neg_points": [],
        "mode": "box_1pt",
    })
    assert r.status_code == 200
    blob = r.json()
    h, w = blob["mask"]["size"]
    assert sum(blob["mask"]["counts"]) == h * w
    foreground = sum(blob["mask"]["counts"][1::2])
    assert foreground > 0
