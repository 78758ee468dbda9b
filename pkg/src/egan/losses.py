"""Training objectives: adversarial, class-balanced attribute, and latent reconstruction losses.

All functions return the quantity to MINIMIZE and reduce with mean over the
batch, sum over attributes. Probabilities are clamped at EPSILON before logs.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch

EPSILON = 1e-7


@dataclass(frozen=True)
class SelectiveWeights:
    """Per-attribute positive/negative loss weights balancing label imbalance in a batch.

    For attribute i with N positives out of M samples: positive weight M/(2N),
    negative weight M/(2(M-N)), so each side contributes equal mass. When one
    side is absent its weight is 0 and the other side is left unweighted at 1.
    """

    positive: torch.Tensor  # (n_a,)
    negative: torch.Tensor  # (n_a,)


@dataclass(frozen=True)
class LossReport:
    discriminator: float
    classifier: float
    adversarial: float
    attr_real: float
    attr_sampled: float
    connection: float
    generator_total: float


def _check_binary(labels: torch.Tensor) -> None:
    if not torch.all((labels == 0) | (labels == 1)):
        raise ValueError("labels must be binary {0, 1}")


def selective_weights(labels: torch.Tensor) -> SelectiveWeights:
    if labels.ndim != 2:
        raise ValueError(f"labels must be (M, n_a), got shape {tuple(labels.shape)}")
    m = labels.shape[0]
    if m < 2:
        raise ValueError("need a batch of at least 2 samples")
    _check_binary(labels)
    positives = labels.sum(dim=0)
    negatives = m - positives
    one = torch.ones_like(positives)
    zero = torch.zeros_like(positives)
    w_pos = torch.where(positives == 0, zero, torch.where(negatives == 0, one, m / (2.0 * positives)))
    w_neg = torch.where(negatives == 0, zero, torch.where(positives == 0, one, m / (2.0 * negatives)))
    return SelectiveWeights(positive=w_pos, negative=w_neg)


def attribute_loss(logits: torch.Tensor, labels: torch.Tensor, weights: SelectiveWeights) -> torch.Tensor:
    """Selectively weighted multi-label cross entropy on sigmoid-squashed logits."""
    if logits.shape != labels.shape:
        raise ValueError(f"logits {tuple(logits.shape)} vs labels {tuple(labels.shape)}")
    _check_binary(labels)
    probs = torch.sigmoid(logits).clamp(EPSILON, 1.0 - EPSILON)
    per_entry = -(
        weights.positive * labels * torch.log(probs)
        + weights.negative * (1.0 - labels) * torch.log(1.0 - probs)
    )
    return per_entry.sum(dim=1).mean()


def discriminator_loss(d_real: torch.Tensor, d_fake: torch.Tensor) -> torch.Tensor:
    """-E[log D(x)] - E[log(1 - D(fake))]; drives real scores up and fake scores down."""
    real = d_real.clamp(EPSILON, 1.0 - EPSILON)
    fake = d_fake.clamp(EPSILON, 1.0 - EPSILON)
    return -torch.log(real).mean() - torch.log(1.0 - fake).mean()


def generator_adversarial_loss(d_fake: torch.Tensor) -> torch.Tensor:
    """Non-saturating generator objective -E[log D(fake)]."""
    fake = d_fake.clamp(EPSILON, 1.0 - EPSILON)
    return -torch.log(fake).mean()


def generator_attribute_loss(
    logits_on_fake: torch.Tensor, target_attrs: torch.Tensor, weights: SelectiveWeights
) -> torch.Tensor:
    """Attribute loss evaluated on classifier outputs for generated images."""
    return attribute_loss(logits_on_fake, target_attrs, weights)


def connection_loss(latents: torch.Tensor, recovered: torch.Tensor) -> torch.Tensor:
    """Mean absolute error between sampled and recovered latent vectors."""
    if latents.shape != recovered.shape:
        raise ValueError(f"latents {tuple(latents.shape)} vs recovered {tuple(recovered.shape)}")
    return (latents - recovered).abs().mean()


def combined_generator_loss(
    adversarial: torch.Tensor,
    attr_real: torch.Tensor,
    attr_sampled: torch.Tensor,
    lambda_attr_real: float = 1.0,
    lambda_attr_sampled: float = 1.0,
) -> torch.Tensor:
    return adversarial + lambda_attr_real * attr_real + lambda_attr_sampled * attr_sampled
