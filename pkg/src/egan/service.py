"""Stateless JSON inference API over a frozen checkpoint.

All errors share the {code, message} body. Images travel as base64 PNG.
Requests are independent and deterministic given their seed fields, so any
response can be replayed byte for byte.
"""

from __future__ import annotations

import hashlib
import threading
from pathlib import Path
from typing import Any

import numpy as np
from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse

from . import editing
from .checkpoint import Checkpoint, load_checkpoint
from .imgio import ImageDecodeError, decode_png_base64, encode_png_base64
from .models import sample_latents

MAX_FRAMES = 64
_FORWARD_SLOTS = threading.Semaphore(4)  # cap concurrent model passes


class ApiError(Exception):
    def __init__(self, status: int, code: str, message: str):
        super().__init__(message)
        self.status = status
        self.code = code
        self.message = message


def _error(status: int, code: str, message: str) -> JSONResponse:
    return JSONResponse(status_code=status, content={"code": code, "message": message})


def create_app(checkpoint_path: Path | str) -> FastAPI:
    ckpt = load_checkpoint(checkpoint_path)
    app = FastAPI(title="egan inference service", version="1")
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"]
    )
    schema_hash = hashlib.sha256(" ".join(ckpt.schema.names).encode()).hexdigest()[:16]

    @app.exception_handler(ApiError)
    async def handle_api_error(_: Request, err: ApiError):
        return _error(err.status, err.code, err.message)

    @app.exception_handler(RequestValidationError)
    async def handle_validation(_: Request, err: RequestValidationError):
        return _error(422, "invalid_request", str(err.errors()[0].get("msg", "invalid request")))

    @app.exception_handler(Exception)
    async def handle_unexpected(_: Request, err: Exception):
        return _error(500, "internal", f"{type(err).__name__}: {err}")

    def decode_image(payload: Any) -> np.ndarray:
        if not isinstance(payload, str):
            raise ApiError(400, "bad_image", "image must be a base64 string")
        try:
            image = decode_png_base64(payload)
        except ImageDecodeError as err:
            raise ApiError(400, "bad_image", str(err)) from None
        expected = ckpt.state.config.resolution
        if image.shape[0] != expected or image.shape[1] != expected:
            raise ApiError(
                422,
                "resolution_mismatch",
                f"expected {expected}x{expected}, got {image.shape[1]}x{image.shape[0]}",
            )
        return image

    def attribute_vector(mapping: Any, base: np.ndarray | None = None) -> np.ndarray:
        if mapping is None:
            mapping = {}
        if not isinstance(mapping, dict):
            raise ApiError(422, "invalid_request", "attributes must be a name->value object")
        values = (base if base is not None else np.zeros(ckpt.schema.count)).astype(np.float32).copy()
        for name, value in mapping.items():
            if name not in ckpt.schema.names:
                raise ApiError(422, "unknown_attribute", f"unknown attribute {name!r}")
            if not isinstance(value, (int, float)) or isinstance(value, bool):
                raise ApiError(422, "attribute_range", f"{name}: value must be a number")
            if not -1.0 <= float(value) <= 1.0:
                raise ApiError(422, "attribute_range", f"{name}: {value} outside [-1, 1]")
            values[ckpt.schema.index(name)] = float(value)
        return values

    def latent_vector(payload: Any) -> np.ndarray:
        arr = np.asarray(payload, dtype=np.float32)
        if arr.shape != (ckpt.state.config.latent_dim,):
            raise ApiError(
                422, "invalid_request", f"z must have length {ckpt.state.config.latent_dim}"
            )
        return arr

    def attribute_map(values: np.ndarray) -> dict[str, float]:
        return {name: float(v) for name, v in zip(ckpt.schema.names, values)}

    def resolve_source(body: dict) -> tuple[np.ndarray, np.ndarray]:
        """Latent + attributes from either an uploaded image or an explicit z."""
        if "image" in body and body["image"] is not None:
            image = decode_image(body["image"])
            source_attrs = editing.predict_attributes(ckpt.state, image)
            return editing.invert_image(ckpt.state, image, source_attrs), source_attrs
        if "z" in body and body["z"] is not None:
            return latent_vector(body["z"]), np.zeros(ckpt.schema.count, dtype=np.float32)
        raise ApiError(422, "invalid_request", "request needs an image or a z vector")

    @app.get("/healthz")
    def healthz():
        return {"checkpoint_id": ckpt.checkpoint_id, "schema_hash": schema_hash}

    @app.get("/v1/attributes")
    def attributes():
        return {
            "names": list(ckpt.schema.names),
            "latent_dim": ckpt.state.config.latent_dim,
            "resolution": ckpt.state.config.resolution,
            "checkpoint_id": ckpt.checkpoint_id,
        }

    @app.post("/v1/invert")
    def invert(body: dict):
        image = decode_image(body.get("image"))
        with _FORWARD_SLOTS:
            predicted = editing.predict_attributes(ckpt.state, image)
            latent = editing.invert_image(ckpt.state, image, predicted)
        return {"z": [float(v) for v in latent], "predicted_attributes": attribute_map(predicted)}

    @app.post("/v1/reconstruct")
    def reconstruct_endpoint(body: dict):
        image = decode_image(body.get("image"))
        with _FORWARD_SLOTS:
            out = editing.reconstruct(ckpt.state, image)
        return {"image": encode_png_base64(out)}

    @app.post("/v1/edit")
    def edit(body: dict):
        with _FORWARD_SLOTS:
            if "image" in body and body["image"] is not None:
                image = decode_image(body["image"])
                source = editing.predict_attributes(ckpt.state, image)
                target = attribute_vector(body.get("attributes"), base=source)
                out = editing.edit_attributes(ckpt.state, image, target, source_attributes=source)
            else:
                latent, _ = resolve_source(body)
                target = attribute_vector(body.get("attributes"))
                out = editing.generate_novel(ckpt.state, target, latents=latent)
        return {"image": encode_png_base64(out)}

    @app.post("/v1/generate")
    def generate(body: dict):
        target = attribute_vector(body.get("attributes"))
        seed = body.get("seed")
        if seed is None:
            seed = int(np.random.default_rng().integers(0, 2**31 - 1))
        if not isinstance(seed, int) or isinstance(seed, bool):
            raise ApiError(422, "invalid_request", "seed must be an integer")
        rng = np.random.default_rng(seed)
        latent = sample_latents(1, ckpt.state.config.latent_dim, rng)[0]
        with _FORWARD_SLOTS:
            image = editing.generate_novel(ckpt.state, target, latents=latent)
        return {"image": encode_png_base64(image), "z": [float(v) for v in latent], "seed": seed}

    @app.post("/v1/interpolate")
    def interpolate(body: dict):
        steps = body.get("steps", 8)
        if not isinstance(steps, int) or isinstance(steps, bool) or steps < 2:
            raise ApiError(422, "invalid_request", "steps must be an integer >= 2")
        if steps > MAX_FRAMES:
            raise ApiError(422, "too_many_frames", f"steps capped at {MAX_FRAMES}")
        mode = body.get("mode", "latent")

        with _FORWARD_SLOTS:
            if mode == "pose":
                if not body.get("a") or body["a"].get("image") is None:
                    raise ApiError(422, "invalid_request", "pose mode needs a.image")
                image = decode_image(body["a"]["image"])
                frames = editing.pose_walk(ckpt.state, image, steps)
            elif mode == "latent":
                if not body.get("a") or not body.get("b"):
                    raise ApiError(422, "invalid_request", "latent mode needs endpoints a and b")
                z_a, attrs_a = resolve_source(body["a"])
                z_b, attrs_b = resolve_source(body["b"])
                attrs_a = attribute_vector(body["a"].get("attributes"), base=attrs_a)
                attrs_b = attribute_vector(body["b"].get("attributes"), base=attrs_b)
                frames = editing.interpolate(ckpt.state, (z_a, attrs_a), (z_b, attrs_b), steps)
            else:
                raise ApiError(422, "invalid_request", f"unknown mode {mode!r}")
        return {"frames": [encode_png_base64(f) for f in frames]}

    app.state.checkpoint = ckpt
    return app
