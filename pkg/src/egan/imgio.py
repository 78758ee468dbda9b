"""PNG round-tripping between [-1, 1] float images, files, and base64 wire strings."""

from __future__ import annotations

import base64
import binascii
import io
import math
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from .dataset import denormalize_image, normalize_image


class ImageDecodeError(ValueError):
    pass


def save_png(pixels: np.ndarray, path: Path | str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(denormalize_image(pixels)).save(path, format="PNG")
    return path


def load_png(path: Path | str) -> np.ndarray:
    raw = np.asarray(Image.open(path).convert("RGB"))
    return normalize_image(raw)


def encode_png_base64(pixels: np.ndarray) -> str:
    buf = io.BytesIO()
    Image.fromarray(denormalize_image(pixels)).save(buf, format="PNG")
    return base64.b64encode(buf.getvalue()).decode("ascii")


def decode_png_base64(data: str) -> np.ndarray:
    try:
        raw = base64.b64decode(data, validate=True)
        image = Image.open(io.BytesIO(raw)).convert("RGB")
    except (binascii.Error, UnidentifiedImageError, OSError, ValueError) as err:
        raise ImageDecodeError(f"not a decodable base64 image: {err}") from None
    return normalize_image(np.asarray(image))


def image_grid(images: list[np.ndarray] | np.ndarray, columns: int | None = None) -> np.ndarray:
    """Tile images row-major into one image, padding empty cells with -1 (black)."""
    images = [np.asarray(im) for im in images]
    if not images:
        raise ValueError("no images to tile")
    h, w, c = images[0].shape
    if columns is None:
        columns = max(1, int(math.ceil(math.sqrt(len(images)))))
    rows = int(math.ceil(len(images) / columns))
    grid = np.full((rows * h, columns * w, c), -1.0, dtype=np.float32)
    for k, im in enumerate(images):
        r, col = divmod(k, columns)
        grid[r * h : (r + 1) * h, col * w : (col + 1) * w] = im
    return grid
