"""Inference over a frozen checkpoint: inversion, attribute edits, interpolation, pose walks.

Every operation is deterministic and read-only; single images (H, W, 3) and
batches (N, H, W, 3) are both accepted wherever that makes sense.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .models import (
    ModelState,
    classifier_forward,
    connection_forward,
    discriminator_forward,
    generator_forward,
    sample_latents,
)


@dataclass(frozen=True)
class LatentDirection:
    values: np.ndarray
    label: str = ""


def _sigmoid(x: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-x))


def _check_attribute_range(attributes: np.ndarray) -> None:
    if np.min(attributes) < -1.0 or np.max(attributes) > 1.0:
        raise ValueError("attribute values must lie in [-1, 1]")


def predict_attributes(state: ModelState, images: np.ndarray) -> np.ndarray:
    """Classifier-predicted binary attributes at threshold 0.5."""
    logits, _ = classifier_forward(state, images)
    return (_sigmoid(logits) > 0.5).astype(np.float32)


def invert_image(state: ModelState, images: np.ndarray, attributes: np.ndarray | None = None) -> np.ndarray:
    """Recover the latent vector of an arbitrary image through the connection network.

    When attributes are absent they are taken from the model's own classifier.
    """
    _, feat_d = discriminator_forward(state, images)
    logits, feat_c = classifier_forward(state, images)
    if attributes is None:
        attributes = (_sigmoid(logits) > 0.5).astype(np.float32)
    else:
        attributes = np.asarray(attributes, dtype=np.float32)
        _check_attribute_range(attributes)
    return connection_forward(state, feat_d, feat_c, attributes)


def reconstruct(state: ModelState, images: np.ndarray, attributes: np.ndarray | None = None) -> np.ndarray:
    """Regenerate an image from its recovered latent with its own attributes."""
    if attributes is None:
        attributes = predict_attributes(state, images)
    return edit_attributes(state, images, attributes, source_attributes=attributes)


def edit_attributes(
    state: ModelState,
    images: np.ndarray,
    target_attributes: np.ndarray,
    source_attributes: np.ndarray | None = None,
) -> np.ndarray:
    """Invert, then regenerate with the target attribute vector.

    An identity edit (target == source) is exactly the reconstruction.
    """
    target_attributes = np.asarray(target_attributes, dtype=np.float32)
    _check_attribute_range(target_attributes)
    latents = invert_image(state, images, source_attributes)
    return generator_forward(state, latents, target_attributes)


def generate_novel(
    state: ModelState,
    attributes: np.ndarray,
    latents: np.ndarray | None = None,
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """Generate from a given latent or a fresh uniform draw."""
    attributes = np.asarray(attributes, dtype=np.float32)
    _check_attribute_range(attributes)
    if (latents is None) == (rng is None):
        raise ValueError("provide exactly one of latents / rng")
    if latents is None:
        n = attributes.shape[0] if attributes.ndim == 2 else 1
        latents = sample_latents(n, state.config.latent_dim, rng)
        if attributes.ndim == 1:
            latents = latents[0]
    return generator_forward(state, latents, attributes)


def interpolate(
    state: ModelState,
    endpoint_a: tuple[np.ndarray, np.ndarray],
    endpoint_b: tuple[np.ndarray, np.ndarray],
    steps: int,
) -> list[np.ndarray]:
    """Linear walk between (latent, attributes) endpoints on a grid including both ends."""
    if steps < 2:
        raise ValueError("steps must be >= 2")
    z_a, y_a = (np.asarray(v, dtype=np.float32) for v in endpoint_a)
    z_b, y_b = (np.asarray(v, dtype=np.float32) for v in endpoint_b)
    frames = []
    for z, y in _linear_grid(z_a, z_b, y_a, y_b, steps):
        frames.append(generator_forward(state, z, y))
    return frames


def _linear_grid(z_a, z_b, y_a, y_b, steps):
    """Uniform grid with bit-exact endpoints."""
    for i in range(steps):
        if i == 0:
            yield z_a, y_a
        elif i == steps - 1:
            yield z_b, y_b
        else:
            t = i / (steps - 1)
            yield (1.0 - t) * z_a + t * z_b, ((1.0 - t) * y_a + t * y_b).astype(np.float32)


def attribute_strength(
    state: ModelState,
    image: np.ndarray,
    attr_index: int,
    value: float,
    source_attributes: np.ndarray | None = None,
) -> np.ndarray:
    """Set one attribute to a fractional or negative strength, keeping the rest at source."""
    if not -1.0 <= value <= 1.0:
        raise ValueError("strength value must lie in [-1, 1]")
    if source_attributes is None:
        source_attributes = predict_attributes(state, image)
    source_attributes = np.asarray(source_attributes, dtype=np.float32)
    if not 0 <= attr_index < source_attributes.shape[-1]:
        raise ValueError(f"attribute index {attr_index} out of range")
    target = source_attributes.copy()
    target[..., attr_index] = value
    return edit_attributes(state, image, target, source_attributes=source_attributes)


def estimate_direction(
    state: ModelState,
    images_a: np.ndarray,
    images_b: np.ndarray,
    attributes: np.ndarray | None = None,
    label: str = "",
) -> LatentDirection:
    """Mean latent of set A minus mean latent of set B."""
    images_a, images_b = np.asarray(images_a), np.asarray(images_b)
    if images_a.ndim != 4 or images_b.ndim != 4 or images_a.shape[0] == 0 or images_b.shape[0] == 0:
        raise ValueError("both image sets must be non-empty (N, H, W, 3) arrays")

    def mean_latent(images: np.ndarray) -> np.ndarray:
        attrs = None
        if attributes is not None:
            attrs = np.broadcast_to(np.asarray(attributes, dtype=np.float32), (images.shape[0], len(attributes)))
        return invert_image(state, images, attrs).mean(axis=0)

    return LatentDirection(values=mean_latent(images_a) - mean_latent(images_b), label=label)


def apply_direction(
    state: ModelState,
    image: np.ndarray,
    direction: LatentDirection,
    coefficient: float = 1.0,
    attributes: np.ndarray | None = None,
) -> np.ndarray:
    """Shift an inverted image along a latent direction and regenerate."""
    if attributes is None:
        attributes = predict_attributes(state, image)
    latent = invert_image(state, image, attributes) + coefficient * direction.values
    return generator_forward(state, np.clip(latent, -1.0, 1.0), attributes)


def hflip(image: np.ndarray) -> np.ndarray:
    """Mirror left-right; an involution."""
    return np.ascontiguousarray(np.flip(image, axis=-2))


def pose_walk(
    state: ModelState,
    image: np.ndarray,
    steps: int,
    attributes: np.ndarray | None = None,
) -> list[np.ndarray]:
    """Walk from an image's latent to its mirrored counterpart's latent, attributes fixed."""
    if steps < 2:
        raise ValueError("steps must be >= 2")
    if attributes is None:
        attributes = predict_attributes(state, image)
    attributes = np.asarray(attributes, dtype=np.float32)
    z_start = invert_image(state, image, attributes)
    z_end = invert_image(state, hflip(image), attributes)
    frames = []
    for z, _ in _linear_grid(z_start, z_end, attributes, attributes, steps):
        frames.append(generator_forward(state, z, attributes))
    return frames
