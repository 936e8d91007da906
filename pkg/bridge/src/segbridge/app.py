"""FastAPI application implementing the /v1/segment wire protocol.

Responses are serialized canonically (sorted keys, compact separators) so
conforming clients and fixtures can compare bytes, not just structure.
"""

from __future__ import annotations

import json
import threading

from fastapi import FastAPI, Response
from fastapi.exceptions import RequestValidationError

from segreward.errors import SegmenterUnavailable, UnknownImage
from segreward.segmenter import request_from_json, response_to_json

from .config import BridgeConfig

__all__ = ["create_app", "canonical_json"]


def canonical_json(payload: dict) -> bytes:
    return json.dumps(payload, sort_keys=True, separators=(",", ":")).encode("utf-8")


def _reply(payload: dict, status: int = 200) -> Response:
    return Response(content=canonical_json(payload), status_code=status, media_type="application/json")


def _error(status: int, code: str, message: str) -> Response:
    return _reply({"error": {"code": code, "message": message}}, status=status)


def create_app(cfg: BridgeConfig, model) -> FastAPI:
    """Wire the model layer (echo or real checkpoint) behind the protocol."""
    app = FastAPI(title="segmenter bridge", docs_url=None, redoc_url=None)
    gate = threading.BoundedSemaphore(cfg.max_concurrency)

    @app.exception_handler(RequestValidationError)
    def _bad_body(request, exc):
        return _error(400, "bad_request", "malformed request body")

    @app.get("/v1/health")
    def health() -> Response:
        return _reply({"status": "ok", "model": model.name})

    @app.post("/v1/segment")
    def segment(payload: dict) -> Response:
        try:
            req = request_from_json(payload)
        except ValueError as exc:
            return _error(400, "bad_request", str(exc))
        try:
            with gate:
                resp = model.segment(req)
        except UnknownImage as exc:
            return _error(404, "unknown_image", str(exc))
        except SegmenterUnavailable as exc:
            return _error(500, "model_failure", str(exc))
        except Exception as exc:  # model layer must never crash the server
            return _error(500, "model_failure", f"{type(exc).__name__}: {exc}")

        mask = resp.mask
        if sum(mask.counts) != mask.width * mask.height:  # defense in depth
            return _error(500, "model_failure", "mask counts inconsistent with size")
        return _reply(response_to_json(resp))

    return app
