"""The four networks: conditional generator, discriminator, attribute classifier, connection network.

Conv stacks follow the stable transposed-conv/strided-conv recipe, depth
log2(resolution) - 2. Normalization is GroupNorm without affine parameters so
every forward pass is exactly batch-equivariant and all learnable tensors are
fan-in initialized weights plus zero biases.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import torch
from torch import nn

ADAM_BETAS = (0.5, 0.999)
DEFAULT_LEARNING_RATE = 2e-4


@dataclass(frozen=True)
class NetworkConfig:
    n_attributes: int
    latent_dim: int = 100
    resolution: int = 64
    base_channels: int = 64
    feature_dim_d: int = 512
    feature_dim_c: int = 512
    connection_hidden: tuple[int, ...] = (512, 512)

    def __post_init__(self):
        if self.resolution not in (32, 64):
            raise ValueError("resolution must be 32 or 64")
        for name in ("n_attributes", "latent_dim", "base_channels", "feature_dim_d", "feature_dim_c"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if any(h < 1 for h in self.connection_hidden):
            raise ValueError("connection_hidden widths must be positive")

    @property
    def n_blocks(self) -> int:
        return int(math.log2(self.resolution)) - 2


def _norm(channels: int) -> nn.GroupNorm:
    return nn.GroupNorm(math.gcd(channels, 8), channels, affine=False)


class Generator(nn.Module):
    """Maps latent + attribute vector to an image in (-1, 1)^{HxWx3}.

    Deliberately norm-free: per-sample normalization strips the global level
    information that conditioned flat regions (background brightness, border
    presence) are made of.
    """

    def __init__(self, config: NetworkConfig):
        super().__init__()
        self.config = config
        top = config.base_channels * 2 ** (config.n_blocks - 1)
        self.project = nn.Linear(config.latent_dim + config.n_attributes, 4 * 4 * top)
        layers: list[nn.Module] = [nn.ReLU()]
        ch = top
        for _ in range(config.n_blocks - 1):
            layers += [nn.ConvTranspose2d(ch, ch // 2, 4, 2, 1), nn.ReLU()]
            ch //= 2
        layers += [nn.ConvTranspose2d(ch, 3, 4, 2, 1), nn.Tanh()]
        self.blocks = nn.Sequential(*layers)
        self._top = top

    def forward(self, latents: torch.Tensor, attributes: torch.Tensor) -> torch.Tensor:
        if latents.shape[1] != self.config.latent_dim:
            raise ValueError(f"latent dim {latents.shape[1]} != {self.config.latent_dim}")
        if attributes.shape[1] != self.config.n_attributes:
            raise ValueError(f"attribute dim {attributes.shape[1]} != {self.config.n_attributes}")
        h = self.project(torch.cat([latents, attributes], dim=1))
        return self.blocks(h.reshape(-1, self._top, 4, 4))


class _ConvTrunk(nn.Module):
    """Shared topology for discriminator and classifier: strided convs to a feature vector."""

    def __init__(self, config: NetworkConfig, feature_dim: int):
        super().__init__()
        layers: list[nn.Module] = [nn.Conv2d(3, config.base_channels, 4, 2, 1), nn.LeakyReLU(0.2)]
        ch = config.base_channels
        for _ in range(config.n_blocks - 1):
            layers += [nn.Conv2d(ch, ch * 2, 4, 2, 1), _norm(ch * 2), nn.LeakyReLU(0.2)]
            ch *= 2
        self.conv = nn.Sequential(*layers)
        self.fc = nn.Linear(ch * 4 * 4, feature_dim)

    def forward(self, images: torch.Tensor) -> torch.Tensor:
        h = self.conv(images).flatten(1)
        return torch.nn.functional.leaky_relu(self.fc(h), 0.2)


class Discriminator(nn.Module):
    """Realness critic; exposes its last hidden vector as the structural feature tap."""

    def __init__(self, config: NetworkConfig):
        super().__init__()
        self.config = config
        self.trunk = _ConvTrunk(config, config.feature_dim_d)
        self.head = nn.Linear(config.feature_dim_d, 1)

    def forward(self, images: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        features = self.trunk(images)
        score = torch.sigmoid(self.head(features)).squeeze(1)
        return score, features


class AttributeClassifier(nn.Module):
    """Multi-label attribute head; returns pre-sigmoid logits and the semantic feature tap."""

    def __init__(self, config: NetworkConfig):
        super().__init__()
        self.config = config
        self.trunk = _ConvTrunk(config, config.feature_dim_c)
        self.head = nn.Linear(config.feature_dim_c, config.n_attributes)

    def forward(self, images: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        features = self.trunk(images)
        return self.head(features), features


class ConnectionNetwork(nn.Module):
    """Fully connected stack from concatenated feature taps + attributes back to the latent box."""

    def __init__(self, config: NetworkConfig):
        super().__init__()
        self.config = config
        widths = [config.feature_dim_d + config.feature_dim_c + config.n_attributes]
        widths += list(config.connection_hidden)
        layers: list[nn.Module] = []
        for w_in, w_out in zip(widths[:-1], widths[1:]):
            layers += [nn.Linear(w_in, w_out), nn.LeakyReLU(0.2)]
        layers += [nn.Linear(widths[-1], config.latent_dim), nn.Tanh()]
        self.net = nn.Sequential(*layers)

    def forward(self, feat_d: torch.Tensor, feat_c: torch.Tensor, attributes: torch.Tensor) -> torch.Tensor:
        return self.net(torch.cat([feat_d, feat_c, attributes], dim=1))


NETWORK_NAMES = ("generator", "discriminator", "classifier", "connection")


@dataclass
class ModelState:
    """Parameters and optimizer moments of the four networks plus the training clock."""

    config: NetworkConfig
    generator: Generator
    discriminator: Discriminator
    classifier: AttributeClassifier
    connection: ConnectionNetwork
    optimizers: dict[str, torch.optim.Adam]
    step: int = 0
    rng: np.random.Generator = field(default_factory=np.random.default_rng)

    def networks(self) -> dict[str, nn.Module]:
        return {
            "generator": self.generator,
            "discriminator": self.discriminator,
            "classifier": self.classifier,
            "connection": self.connection,
        }


def _fan_in(weight: torch.Tensor) -> int:
    receptive = 1
    for s in weight.shape[2:]:
        receptive *= s
    return weight.shape[1] * receptive


def _init_module(module: nn.Module, generator: torch.Generator) -> None:
    for name, param in module.named_parameters():
        with torch.no_grad():
            if name.endswith("bias"):
                param.zero_()
            else:
                # He-style scale keeps signal magnitude through the stacks; the
                # cap preserves the strict |w| < 1 contract at degenerate fan-in.
                bound = min(math.sqrt(6.0 / _fan_in(param)), 0.9)
                param.uniform_(-bound, bound, generator=generator)


def init_params(config: NetworkConfig, seed: int) -> ModelState:
    """Build the four networks with deterministic fan-in scaled uniform weights."""
    torch_gen = torch.Generator().manual_seed(seed)
    nets = {
        "generator": Generator(config),
        "discriminator": Discriminator(config),
        "classifier": AttributeClassifier(config),
        "connection": ConnectionNetwork(config),
    }
    for name in NETWORK_NAMES:
        _init_module(nets[name], torch_gen)
    optimizers = {
        name: torch.optim.Adam(nets[name].parameters(), lr=DEFAULT_LEARNING_RATE, betas=ADAM_BETAS)
        for name in NETWORK_NAMES
    }
    return ModelState(
        config=config,
        generator=nets["generator"],
        discriminator=nets["discriminator"],
        classifier=nets["classifier"],
        connection=nets["connection"],
        optimizers=optimizers,
        step=0,
        rng=np.random.default_rng(seed),
    )


def images_to_torch(images: np.ndarray) -> torch.Tensor:
    """(N, H, W, 3) or (H, W, 3) float array to a float32 NCHW tensor."""
    arr = np.asarray(images, dtype=np.float32)
    if arr.ndim == 3:
        arr = arr[None]
    if arr.ndim != 4 or arr.shape[3] != 3:
        raise ValueError(f"expected (N, H, W, 3) images, got {arr.shape}")
    return torch.from_numpy(np.ascontiguousarray(arr.transpose(0, 3, 1, 2)))


def torch_to_images(tensor: torch.Tensor) -> np.ndarray:
    """NCHW tensor back to (N, H, W, 3) float32."""
    return tensor.detach().permute(0, 2, 3, 1).contiguous().numpy()


def _as_matrix(values: np.ndarray, dim: int, what: str) -> tuple[torch.Tensor, bool]:
    arr = np.asarray(values, dtype=np.float32)
    single = arr.ndim == 1
    if single:
        arr = arr[None]
    if arr.ndim != 2 or arr.shape[1] != dim:
        raise ValueError(f"{what} must have last dimension {dim}, got shape {arr.shape}")
    return torch.from_numpy(arr), single


def generator_forward(state: ModelState, latents: np.ndarray, attributes: np.ndarray) -> np.ndarray:
    """Frozen-state generation; accepts single vectors or batches, returns (..., H, W, 3)."""
    z, single = _as_matrix(latents, state.config.latent_dim, "latents")
    y, single_y = _as_matrix(attributes, state.config.n_attributes, "attributes")
    if z.shape[0] != y.shape[0]:
        raise ValueError("latents and attributes disagree on batch size")
    with torch.no_grad():
        images = torch_to_images(state.generator(z, y))
    return images[0] if single and single_y else images


def discriminator_forward(state: ModelState, images: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    single = np.asarray(images).ndim == 3
    x = images_to_torch(images)
    with torch.no_grad():
        score, features = state.discriminator(x)
    score, features = score.numpy(), features.numpy()
    return (score[0], features[0]) if single else (score, features)


def classifier_forward(state: ModelState, images: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    single = np.asarray(images).ndim == 3
    x = images_to_torch(images)
    with torch.no_grad():
        logits, features = state.classifier(x)
    logits, features = logits.numpy(), features.numpy()
    return (logits[0], features[0]) if single else (logits, features)


def connection_forward(
    state: ModelState, feat_d: np.ndarray, feat_c: np.ndarray, attributes: np.ndarray
) -> np.ndarray:
    fd, single = _as_matrix(feat_d, state.config.feature_dim_d, "feat_d")
    fc, _ = _as_matrix(feat_c, state.config.feature_dim_c, "feat_c")
    y, _ = _as_matrix(attributes, state.config.n_attributes, "attributes")
    if not fd.shape[0] == fc.shape[0] == y.shape[0]:
        raise ValueError("feature and attribute batch sizes disagree")
    with torch.no_grad():
        latents = state.connection(fd, fc, y).numpy()
    return latents[0] if single else latents


def sample_latents(batch_size: int, latent_dim: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform prior draws on [-1, 1]^latent_dim."""
    return rng.uniform(-1.0, 1.0, size=(batch_size, latent_dim)).astype(np.float32)
