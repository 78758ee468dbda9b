"""Per-batch update schedule for the four networks, metric logging, checkpointing, resume.

Each step runs one update per network in the order discriminator, classifier,
generator, connection. The recovered latent feeding the generator's sampled
attribute term is detached, and the connection network trains against frozen
copies of everything else, so no phase leaks gradients across networks.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field, asdict
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
import torch

from . import losses
from .checkpoint import load_checkpoint, resolve_latest, save_checkpoint, write_numbered_checkpoint
from .dataset import (
    AttributeSchema,
    Batch,
    LabeledImage,
    SyntheticConfig,
    generate_synthetic_dataset,
    load_dataset,
    sample_batch,
    sample_random_attributes,
)
from .models import (
    ModelState,
    NetworkConfig,
    images_to_torch,
    init_params,
    sample_latents,
)

METRICS_LOG_NAME = "metrics.jsonl"


@dataclass(frozen=True)
class TrainConfig:
    network: NetworkConfig
    steps: int
    batch_size: int = 64
    dataset_dir: str | None = None
    synthetic: SyntheticConfig | None = None
    lr_generator: float = 2e-4
    lr_discriminator: float = 2e-4
    lr_classifier: float = 2e-4
    lr_connection: float = 2e-4
    lambda_attr_real: float = 1.0
    lambda_attr_sampled: float = 1.0
    checkpoint_every: int = 1000
    seed: int = 0
    out_dir: str = "runs/default"
    resume_from: str | None = None

    def __post_init__(self):
        if self.batch_size < 2:
            raise ValueError("batch_size must be >= 2")
        if self.steps < 0:
            raise ValueError("steps must be >= 0")
        for name in ("lr_generator", "lr_discriminator", "lr_classifier", "lr_connection"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be > 0")
        if (self.dataset_dir is None) == (self.synthetic is None):
            raise ValueError("exactly one of dataset_dir / synthetic must be set")


@dataclass
class StepMetrics:
    step: int
    loss_discriminator: float
    loss_classifier: float
    loss_adversarial: float
    loss_attr_real: float
    loss_attr_sampled: float
    loss_generator_total: float
    loss_connection: float
    d_real_mean: float
    d_fake_mean: float
    classifier_accuracy: float
    wall_time: float

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)


class NonFiniteLossError(RuntimeError):
    """A loss went NaN/inf; carries the diagnostic dump location when one was written."""

    def __init__(self, message: str, dump_path: Path | None = None):
        super().__init__(message)
        self.dump_path = dump_path


def _check_finite(name: str, value: torch.Tensor) -> None:
    if not torch.isfinite(value):
        raise NonFiniteLossError(f"{name} is non-finite at value {value.item()!r}")


def _update_discriminator(state: ModelState, real: torch.Tensor, attrs: torch.Tensor, z: torch.Tensor):
    with torch.no_grad():
        fake = state.generator(z, attrs)
    d_real, _ = state.discriminator(real)
    d_fake, _ = state.discriminator(fake)
    loss = losses.discriminator_loss(d_real, d_fake)
    _check_finite("discriminator loss", loss)
    opt = state.optimizers["discriminator"]
    opt.zero_grad()
    loss.backward()
    opt.step()
    return loss.item(), d_real.mean().item(), d_fake.mean().item()


def _update_classifier(state: ModelState, real: torch.Tensor, attrs: torch.Tensor):
    weights = losses.selective_weights(attrs)
    logits, _ = state.classifier(real)
    loss = losses.attribute_loss(logits, attrs, weights)
    _check_finite("classifier loss", loss)
    opt = state.optimizers["classifier"]
    opt.zero_grad()
    loss.backward()
    opt.step()
    with torch.no_grad():
        accuracy = ((torch.sigmoid(logits) > 0.5).float() == attrs).float().mean().item()
    return loss.item(), accuracy


def _update_generator(
    state: ModelState,
    attrs: torch.Tensor,
    z: torch.Tensor,
    sampled_attrs: torch.Tensor,
    lambda_attr_real: float,
    lambda_attr_sampled: float,
):
    fake = state.generator(z, attrs)
    d_fake, feat_d = state.discriminator(fake)
    logits_fake, feat_c = state.classifier(fake)

    adv = losses.generator_adversarial_loss(d_fake)
    attr_real = losses.generator_attribute_loss(logits_fake, attrs, losses.selective_weights(attrs))

    # Recovered latent is a constant input here: the connection network must not
    # constrain generator training through this path.
    recovered = state.connection(feat_d, feat_c, attrs).detach()
    refake = state.generator(recovered, sampled_attrs)
    logits_refake, _ = state.classifier(refake)
    attr_sampled = losses.generator_attribute_loss(
        logits_refake, sampled_attrs, losses.selective_weights(sampled_attrs)
    )

    total = losses.combined_generator_loss(adv, attr_real, attr_sampled, lambda_attr_real, lambda_attr_sampled)
    _check_finite("generator loss", total)
    opt = state.optimizers["generator"]
    opt.zero_grad()
    # Gradients reach discriminator/classifier buffers but only generator
    # parameters step; the other phases zero their own grads before use.
    total.backward()
    opt.step()
    return adv.item(), attr_real.item(), attr_sampled.item(), total.item()


def _update_connection(state: ModelState, attrs: torch.Tensor, z: torch.Tensor):
    with torch.no_grad():
        fake = state.generator(z, attrs)
        _, feat_d = state.discriminator(fake)
        _, feat_c = state.classifier(fake)
    recovered = state.connection(feat_d, feat_c, attrs)
    loss = losses.connection_loss(z, recovered)
    _check_finite("connection loss", loss)
    opt = state.optimizers["connection"]
    opt.zero_grad()
    loss.backward()
    opt.step()
    return loss.item()


def train_step(
    state: ModelState,
    batch: Batch,
    rng: np.random.Generator,
    lambda_attr_real: float = 1.0,
    lambda_attr_sampled: float = 1.0,
) -> StepMetrics:
    """One full update cycle; draws all randomness from rng in a fixed order."""
    start = time.perf_counter()
    real = images_to_torch(batch.images)
    attrs = torch.from_numpy(np.ascontiguousarray(batch.attributes, dtype=np.float32))
    m = batch.size
    dz = state.config.latent_dim

    z_d = torch.from_numpy(sample_latents(m, dz, rng))
    z_g = torch.from_numpy(sample_latents(m, dz, rng))
    sampled = torch.from_numpy(
        sample_random_attributes(m, AttributeSchema(tuple(f"a{i}" for i in range(state.config.n_attributes))), rng)
    )
    z_cn = torch.from_numpy(sample_latents(m, dz, rng))

    loss_d, d_real_mean, d_fake_mean = _update_discriminator(state, real, attrs, z_d)
    loss_c, accuracy = _update_classifier(state, real, attrs)
    adv, attr_real, attr_sampled, total = _update_generator(
        state, attrs, z_g, sampled, lambda_attr_real, lambda_attr_sampled
    )
    loss_cn = _update_connection(state, attrs, z_cn)

    state.step += 1
    return StepMetrics(
        step=state.step,
        loss_discriminator=loss_d,
        loss_classifier=loss_c,
        loss_adversarial=adv,
        loss_attr_real=attr_real,
        loss_attr_sampled=attr_sampled,
        loss_generator_total=total,
        loss_connection=loss_cn,
        d_real_mean=d_real_mean,
        d_fake_mean=d_fake_mean,
        classifier_accuracy=accuracy,
        wall_time=time.perf_counter() - start,
    )


def _load_training_data(config: TrainConfig) -> tuple[AttributeSchema, list[LabeledImage]]:
    if config.dataset_dir is not None:
        return load_dataset(config.dataset_dir)
    dataset = generate_synthetic_dataset(config.synthetic)
    from .dataset import SYNTHETIC_SCHEMA

    return SYNTHETIC_SCHEMA, dataset


def _dump_failure(run_dir: Path, state: ModelState, batch: Batch, error: Exception) -> Path:
    dump_dir = run_dir / f"failure_step_{state.step:06d}"
    dump_dir.mkdir(parents=True, exist_ok=True)
    np.save(dump_dir / "batch_images.npy", batch.images)
    np.save(dump_dir / "batch_attributes.npy", batch.attributes)
    (dump_dir / "error.txt").write_text(f"{type(error).__name__}: {error}\n")
    from .dataset import SYNTHETIC_SCHEMA

    schema = AttributeSchema(tuple(f"a{i}" for i in range(state.config.n_attributes)))
    save_checkpoint(dump_dir / "state", state, schema)
    return dump_dir


def train(
    config: TrainConfig,
    on_step: Callable[[StepMetrics], None] | None = None,
) -> Path:
    """Run the step loop; returns the final checkpoint directory."""
    run_dir = Path(config.out_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    schema, data = _load_training_data(config)
    if config.network.n_attributes != schema.count:
        raise ValueError(
            f"network expects {config.network.n_attributes} attributes, dataset has {schema.count}"
        )

    if config.resume_from is not None:
        ckpt = load_checkpoint(resolve_latest(config.resume_from))
        state = ckpt.state
        if ckpt.schema.names != schema.names:
            raise ValueError("resume checkpoint schema does not match dataset schema")
    else:
        state = init_params(config.network, config.seed)
    for name, lr in (
        ("generator", config.lr_generator),
        ("discriminator", config.lr_discriminator),
        ("classifier", config.lr_classifier),
        ("connection", config.lr_connection),
    ):
        state.optimizers[name].param_groups[0]["lr"] = lr

    log_path = run_dir / METRICS_LOG_NAME
    mode = "a" if config.resume_from is not None else "w"
    last_metrics: StepMetrics | None = None
    with log_path.open(mode) as log:
        while state.step < config.steps:
            batch = sample_batch(data, config.batch_size, state.rng)
            try:
                metrics = train_step(
                    state,
                    batch,
                    state.rng,
                    lambda_attr_real=config.lambda_attr_real,
                    lambda_attr_sampled=config.lambda_attr_sampled,
                )
            except NonFiniteLossError as err:
                dump = _dump_failure(run_dir, state, batch, err)
                raise NonFiniteLossError(f"{err} (diagnostics in {dump})", dump_path=dump) from None
            log.write(metrics.to_json() + "\n")
            last_metrics = metrics
            if on_step is not None:
                on_step(metrics)
            if config.checkpoint_every > 0 and state.step % config.checkpoint_every == 0:
                write_numbered_checkpoint(run_dir, state, schema, _snapshot(last_metrics))
    final = write_numbered_checkpoint(run_dir, state, schema, _snapshot(last_metrics))
    return final


def _snapshot(metrics: StepMetrics | None) -> dict[str, float]:
    if metrics is None:
        return {}
    snap = asdict(metrics)
    snap.pop("wall_time")
    return snap


_COMPONENTS = ("discriminator", "classifier", "generator", "connection")


def _component_loss(
    state: ModelState, component: str, batch: Batch, rng: np.random.Generator
) -> Callable[[], torch.Tensor]:
    """Deterministic loss closure over fixed inputs, for gradient auditing."""
    dtype = next(state.generator.parameters()).dtype
    real = images_to_torch(batch.images).to(dtype)
    attrs = torch.from_numpy(np.ascontiguousarray(batch.attributes, dtype=np.float32)).to(dtype)
    m = batch.size
    z = torch.from_numpy(sample_latents(m, state.config.latent_dim, rng)).to(dtype)
    schema = AttributeSchema(tuple(f"a{i}" for i in range(state.config.n_attributes)))
    sampled = torch.from_numpy(sample_random_attributes(m, schema, rng)).to(dtype)

    if component == "discriminator":
        with torch.no_grad():
            fake = state.generator(z, attrs)

        def closure() -> torch.Tensor:
            d_real, _ = state.discriminator(real)
            d_fake, _ = state.discriminator(fake)
            return losses.discriminator_loss(d_real, d_fake)

    elif component == "classifier":
        weights = losses.selective_weights(attrs)

        def closure() -> torch.Tensor:
            logits, _ = state.classifier(real)
            return losses.attribute_loss(logits, attrs, weights)

    elif component == "generator":
        # The recovered latent is a constant input to the generator update, so
        # it is frozen here too; otherwise the numeric gradient would pick up
        # the blocked path through the connection network.
        with torch.no_grad():
            fake0 = state.generator(z, attrs)
            _, feat_d0 = state.discriminator(fake0)
            _, feat_c0 = state.classifier(fake0)
            recovered = state.connection(feat_d0, feat_c0, attrs)

        def closure() -> torch.Tensor:
            fake = state.generator(z, attrs)
            d_fake, _ = state.discriminator(fake)
            logits_fake, _ = state.classifier(fake)
            adv = losses.generator_adversarial_loss(d_fake)
            attr_real = losses.generator_attribute_loss(logits_fake, attrs, losses.selective_weights(attrs))
            refake = state.generator(recovered, sampled)
            logits_refake, _ = state.classifier(refake)
            attr_sampled = losses.generator_attribute_loss(
                logits_refake, sampled, losses.selective_weights(sampled)
            )
            return losses.combined_generator_loss(adv, attr_real, attr_sampled)

    elif component == "connection":
        with torch.no_grad():
            fake = state.generator(z, attrs)
            _, feat_d = state.discriminator(fake)
            _, feat_c = state.classifier(fake)

        def closure() -> torch.Tensor:
            recovered = state.connection(feat_d, feat_c, attrs)
            return losses.connection_loss(z, recovered)

    else:
        raise ValueError(f"component must be one of {_COMPONENTS}")
    return closure


def finite_difference_audit(
    state: ModelState,
    batch: Batch,
    component: str,
    n_coordinates: int = 24,
    fd_step: float = 1e-4,
    seed: int = 0,
) -> float:
    """Max relative error between analytic gradients and central differences.

    Runs in float64 on a copy of the state. Coordinates whose analytic and
    numeric gradients are both below 1e-6 fall back to the absolute error.
    An activation kink inside the stencil makes the central difference itself
    invalid, so each coordinate is refined through steps h, h/4, h/16: if the
    two finest estimates disagree the coordinate is skipped and replaced,
    otherwise the finest is the reference. A genuinely wrong analytic gradient
    still disagrees with the step-consistent estimate and is caught.
    """
    audit_state = _to_double(state)
    rng = np.random.default_rng(seed)
    closure = _component_loss(audit_state, component, batch, np.random.default_rng(seed + 1))
    net = audit_state.networks()[component]
    params = [p for p in net.parameters()]

    for p in params:
        p.grad = None
    loss = closure()
    loss.backward()

    flat_sizes = [p.numel() for p in params]
    total = sum(flat_sizes)
    order = rng.permutation(total)

    def fd_at(param: torch.Tensor, index: int, h: float) -> float:
        with torch.no_grad():
            original = param.flatten()[index].item()
            param.flatten()[index] = original + h
            plus = closure().item()
            param.flatten()[index] = original - h
            minus = closure().item()
            param.flatten()[index] = original
        return (plus - minus) / (2.0 * h)

    worst = 0.0
    audited = 0
    for pick in order:
        if audited >= min(n_coordinates, total):
            break
        flat_index = int(pick)
        p_idx = 0
        while flat_index >= flat_sizes[p_idx]:
            flat_index -= flat_sizes[p_idx]
            p_idx += 1
        param = params[p_idx]
        numeric_mid = fd_at(param, flat_index, fd_step / 4.0)
        numeric_fine = fd_at(param, flat_index, fd_step / 16.0)
        scale = max(abs(numeric_mid), abs(numeric_fine), 1e-9)
        if abs(numeric_mid - numeric_fine) / scale > 1e-4:
            continue  # non-smooth point; the difference quotient is meaningless here
        analytic = param.grad.flatten()[flat_index].item() if param.grad is not None else 0.0
        denom = max(abs(analytic), abs(numeric_fine))
        err = abs(analytic - numeric_fine) if denom < 1e-6 else abs(analytic - numeric_fine) / denom
        worst = max(worst, err)
        audited += 1
    return worst


def _to_double(state: ModelState) -> ModelState:
    import copy

    clone = copy.deepcopy(state)
    for net in clone.networks().values():
        net.double()
    return clone


def read_metric_log(run_dir: Path | str) -> list[dict]:
    path = Path(run_dir) / METRICS_LOG_NAME
    return [json.loads(line) for line in path.read_text().splitlines() if line.strip()]
