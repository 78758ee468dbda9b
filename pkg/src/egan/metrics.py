"""Quantitative evaluation: feature-distribution distance, SSIM, PSNR, edit accuracy.

The distribution distance compares Gaussian moment fits of feature vectors;
the feature extractor is pluggable and defaults to the evaluation classifier's
hidden representation, so absolute values are only comparable within a run.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
import torch
from scipy.signal import convolve2d
from torch import nn

from . import losses
from .dataset import LabeledImage, analytic_attribute_oracle  # noqa: F401  (oracle re-exported here)
from .editing import edit_attributes
from .models import ModelState, images_to_torch


@dataclass
class FeatureDistribution:
    mean: np.ndarray        # (d,)
    covariance: np.ndarray  # (d, d)
    count: int

    def __post_init__(self):
        if self.covariance.shape != (self.mean.shape[0], self.mean.shape[0]):
            raise ValueError("covariance shape does not match mean")


def extract_features(images: np.ndarray, extractor: Callable[[np.ndarray], np.ndarray]) -> FeatureDistribution:
    """Unbiased sample mean and covariance of extractor outputs."""
    images = np.asarray(images)
    if images.ndim != 4 or images.shape[0] < 2:
        raise ValueError("need at least 2 images, shaped (N, H, W, 3)")
    features = np.asarray(extractor(images), dtype=np.float64)
    if features.ndim != 2:
        raise ValueError("extractor must return (N, d) features")
    n, d = features.shape
    if n < d:
        warnings.warn(f"only {n} samples for {d}-dim features; covariance will be rank-deficient")
    mean = features.mean(axis=0)
    centered = features - mean
    covariance = centered.T @ centered / (n - 1)
    return FeatureDistribution(mean=mean, covariance=covariance, count=n)


def _psd_sqrt(matrix: np.ndarray) -> np.ndarray:
    sym = (matrix + matrix.T) / 2.0
    eigvals, eigvecs = np.linalg.eigh(sym)
    return (eigvecs * np.sqrt(np.clip(eigvals, 0.0, None))) @ eigvecs.T


def compute_fid(dist_a: FeatureDistribution, dist_b: FeatureDistribution) -> float:
    """Frechet distance between two Gaussian moment fits.

    |mu_a - mu_b|^2 + Tr(S_a + S_b - 2 (S_a S_b)^{1/2}), with the cross term
    evaluated through an eigendecomposition of the symmetrized product.
    """
    if dist_a.mean.shape != dist_b.mean.shape:
        raise ValueError("feature dimensions disagree")

    def attempt(cov_a: np.ndarray, cov_b: np.ndarray) -> float:
        sqrt_a = _psd_sqrt(cov_a)
        inner = sqrt_a @ cov_b @ sqrt_a
        inner = (inner + inner.T) / 2.0
        eigvals = np.linalg.eigvalsh(inner)
        trace_sqrt = np.sqrt(np.clip(eigvals, 0.0, None)).sum()
        diff = dist_a.mean - dist_b.mean
        return float(diff @ diff + np.trace(cov_a) + np.trace(cov_b) - 2.0 * trace_sqrt)

    try:
        value = attempt(dist_a.covariance, dist_b.covariance)
    except np.linalg.LinAlgError:
        jitter = 1e-6 * np.eye(dist_a.mean.shape[0])
        value = attempt(dist_a.covariance + jitter, dist_b.covariance + jitter)
    if value < -1e-6:
        raise FloatingPointError(f"distance collapsed to {value}, beyond numerical undershoot")
    return max(value, 0.0)


def fid_repeated(
    real_images: np.ndarray,
    generated_images: np.ndarray,
    extractor: Callable[[np.ndarray], np.ndarray],
    rng: np.random.Generator,
    repeats: int = 10,
    sample_size: int = 1024,
) -> tuple[float, float, list[float]]:
    """Mean and standard deviation of the distance over resampled repetitions."""
    real_images = np.asarray(real_images)
    generated_images = np.asarray(generated_images)
    values = []
    for _ in range(repeats):
        idx_r = rng.choice(real_images.shape[0], size=min(sample_size, real_images.shape[0]), replace=False)
        idx_g = rng.choice(
            generated_images.shape[0], size=min(sample_size, generated_images.shape[0]), replace=False
        )
        dist_r = extract_features(real_images[idx_r], extractor)
        dist_g = extract_features(generated_images[idx_g], extractor)
        values.append(compute_fid(dist_r, dist_g))
    return float(np.mean(values)), float(np.std(values)), values


_SSIM_WINDOW = 11
_SSIM_SIGMA = 1.5
_SSIM_C1 = (0.01 * 1.0) ** 2
_SSIM_C2 = (0.03 * 1.0) ** 2


def _gaussian_window() -> np.ndarray:
    coords = np.arange(_SSIM_WINDOW, dtype=np.float64) - (_SSIM_WINDOW - 1) / 2
    g = np.exp(-(coords**2) / (2 * _SSIM_SIGMA**2))
    window = np.outer(g, g)
    return window / window.sum()


def ssim(x: np.ndarray, y: np.ndarray) -> float:
    """Windowed structural similarity on [0, 1] luminance, averaged over channels."""
    x, y = np.asarray(x, dtype=np.float64), np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise ValueError("images must share a shape")
    if x.shape[0] < _SSIM_WINDOW or x.shape[1] < _SSIM_WINDOW:
        raise ValueError(f"images must be at least {_SSIM_WINDOW} pixels per side")
    x = (x + 1.0) / 2.0
    y = (y + 1.0) / 2.0
    window = _gaussian_window()

    def filt(img: np.ndarray) -> np.ndarray:
        return convolve2d(img, window, mode="valid")

    channel_means = []
    for c in range(x.shape[2]):
        xc, yc = x[:, :, c], y[:, :, c]
        mu_x, mu_y = filt(xc), filt(yc)
        var_x = filt(xc * xc) - mu_x * mu_x
        var_y = filt(yc * yc) - mu_y * mu_y
        cov = filt(xc * yc) - mu_x * mu_y
        ssim_map = ((2 * mu_x * mu_y + _SSIM_C1) * (2 * cov + _SSIM_C2)) / (
            (mu_x * mu_x + mu_y * mu_y + _SSIM_C1) * (var_x + var_y + _SSIM_C2)
        )
        channel_means.append(ssim_map.mean())
    return float(np.mean(channel_means))


def psnr(x: np.ndarray, y: np.ndarray) -> float:
    """Peak signal-to-noise ratio in dB over the [-1, 1] dynamic range (L = 2)."""
    x, y = np.asarray(x, dtype=np.float64), np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise ValueError("images must share a shape")
    mse = float(np.mean((x - y) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(4.0 / mse)


class _ResidualBlock(nn.Module):
    def __init__(self, channels: int):
        super().__init__()
        self.conv1 = nn.Conv2d(channels, channels, 3, 1, 1)
        self.conv2 = nn.Conv2d(channels, channels, 3, 1, 1)
        self.norm1 = nn.GroupNorm(math.gcd(channels, 8), channels, affine=False)
        self.norm2 = nn.GroupNorm(math.gcd(channels, 8), channels, affine=False)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        h = torch.relu(self.norm1(self.conv1(x)))
        h = self.norm2(self.conv2(h))
        return torch.relu(x + h)


class EvalClassifier(nn.Module):
    """Residual attribute classifier used only for scoring; never trains the generator."""

    def __init__(self, n_attributes: int, base_channels: int = 32, feature_dim: int = 128):
        super().__init__()
        self.n_attributes = n_attributes
        self.feature_dim = feature_dim
        b = base_channels
        self.net = nn.Sequential(
            nn.Conv2d(3, b, 3, 1, 1),
            nn.ReLU(),
            _ResidualBlock(b),
            nn.Conv2d(b, b * 2, 4, 2, 1),
            nn.ReLU(),
            _ResidualBlock(b * 2),
            nn.Conv2d(b * 2, b * 4, 4, 2, 1),
            nn.ReLU(),
            _ResidualBlock(b * 4),
            nn.AdaptiveAvgPool2d(1),
            nn.Flatten(),
        )
        self.fc = nn.Linear(b * 4, feature_dim)
        self.head = nn.Linear(feature_dim, n_attributes)

    def forward(self, images: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        features = torch.relu(self.fc(self.net(images)))
        return self.head(features), features

    def predict(self, images: np.ndarray, batch_size: int = 256) -> np.ndarray:
        """Binary predictions at threshold 0.5 for (N, H, W, 3) images."""
        out = []
        with torch.no_grad():
            for start in range(0, len(images), batch_size):
                logits, _ = self(images_to_torch(images[start : start + batch_size]))
                out.append((torch.sigmoid(logits) > 0.5).float().numpy())
        return np.concatenate(out, axis=0)

    def features(self, images: np.ndarray, batch_size: int = 256) -> np.ndarray:
        """Hidden-representation extractor, the default feature space for FID."""
        out = []
        with torch.no_grad():
            for start in range(0, len(images), batch_size):
                _, feats = self(images_to_torch(images[start : start + batch_size]))
                out.append(feats.numpy())
        return np.concatenate(out, axis=0)


@dataclass(frozen=True)
class EvalClassifierConfig:
    epochs: int = 6
    batch_size: int = 64
    learning_rate: float = 1e-3
    holdout_fraction: float = 0.1
    base_channels: int = 32
    feature_dim: int = 128
    seed: int = 0


def train_eval_classifier(
    dataset: Sequence[LabeledImage], config: EvalClassifierConfig = EvalClassifierConfig()
) -> tuple[EvalClassifier, np.ndarray]:
    """Train the scoring classifier with selective weights; returns it plus held-out accuracy."""
    if len(dataset) < 10:
        raise ValueError("dataset too small to train an evaluation classifier")
    torch.manual_seed(config.seed)
    rng = np.random.default_rng(config.seed)
    n_holdout = max(1, int(len(dataset) * config.holdout_fraction))
    images = np.stack([item.pixels for item in dataset])
    labels = np.stack([item.attributes for item in dataset])
    train_x, train_y = images[:-n_holdout], labels[:-n_holdout]
    held_x, held_y = images[-n_holdout:], labels[-n_holdout:]

    model = EvalClassifier(
        n_attributes=labels.shape[1], base_channels=config.base_channels, feature_dim=config.feature_dim
    )
    optimizer = torch.optim.Adam(model.parameters(), lr=config.learning_rate)
    n = len(train_x)
    for _ in range(config.epochs):
        order = rng.permutation(n)
        for start in range(0, n - 1, config.batch_size):
            idx = order[start : start + config.batch_size]
            if len(idx) < 2:
                continue
            x = images_to_torch(train_x[idx])
            y = torch.from_numpy(train_y[idx])
            logits, _ = model(x)
            loss = losses.attribute_loss(logits, y, losses.selective_weights(y))
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()

    predictions = model.predict(held_x)
    accuracy = (predictions == held_y).mean(axis=0)
    return model, accuracy


def edit_accuracy(
    state: ModelState,
    detector: Callable[[np.ndarray], np.ndarray],
    images: np.ndarray,
    labels: np.ndarray,
    plan: str = "flip",
) -> np.ndarray:
    """Per-attribute success rate of single-attribute edits.

    For each attribute the target is the flipped source bit ("flip"), the
    existing bit ("identity"), or a fixed 0/1; success means the detector reads
    the target value off the edited image.
    """
    return evaluate_editing(state, detector, images, labels, plan).accuracy


@dataclass
class EditReport:
    accuracy: np.ndarray      # (n_a,) target-attribute detection rate
    preservation: np.ndarray  # (n_a,) agreement on untouched attributes


def evaluate_editing(
    state: ModelState,
    detector: Callable[[np.ndarray], np.ndarray],
    images: np.ndarray,
    labels: np.ndarray,
    plan: str = "flip",
) -> EditReport:
    images = np.asarray(images)
    labels = np.asarray(labels, dtype=np.float32)
    n, n_attr = labels.shape
    accuracy = np.zeros(n_attr)
    preserved = np.zeros(n_attr)
    preserved_total = np.zeros(n_attr)
    for i in range(n_attr):
        if plan == "flip":
            targets = 1.0 - labels[:, i]
        elif plan == "identity":
            targets = labels[:, i].copy()
        elif plan in ("0", "1"):
            targets = np.full(n, float(plan), dtype=np.float32)
        else:
            raise ValueError(f"unknown edit plan {plan!r}")
        target_vectors = labels.copy()
        target_vectors[:, i] = targets
        edited = edit_attributes(state, images, target_vectors, source_attributes=labels)
        detected = np.asarray(detector(edited), dtype=np.float32)
        accuracy[i] = float((detected[:, i] == targets).mean())
        for j in range(n_attr):
            if j == i:
                continue
            preserved[j] += (detected[:, j] == labels[:, j]).sum()
            preserved_total[j] += n
    return EditReport(accuracy=accuracy, preservation=preserved / np.maximum(preserved_total, 1))
