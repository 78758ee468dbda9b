"""Flat key=value run configuration with sections; flags override file values.

The effective configuration is echoed into every output directory so a run can
be reproduced from its artifacts alone.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Mapping

from .dataset import SYNTHETIC_ATTRIBUTES, SyntheticConfig, parse_attribute_file
from .models import NetworkConfig
from .training import TrainConfig

# (section, key) -> value type; parsing is table-driven so the INI surface and
# the dataclasses cannot drift apart silently.
_SCHEMA: dict[tuple[str, str], type] = {
    ("dataset", "kind"): str,
    ("dataset", "path"): str,
    ("dataset", "resolution"): int,
    ("dataset", "n_images"): int,
    ("dataset", "seed"): int,
    ("network", "latent_dim"): int,
    ("network", "base_channels"): int,
    ("network", "feature_dim_d"): int,
    ("network", "feature_dim_c"): int,
    ("network", "connection_hidden"): str,
    ("train", "steps"): int,
    ("train", "batch_size"): int,
    ("train", "lr_generator"): float,
    ("train", "lr_discriminator"): float,
    ("train", "lr_classifier"): float,
    ("train", "lr_connection"): float,
    ("train", "lambda_attr_real"): float,
    ("train", "lambda_attr_sampled"): float,
    ("train", "checkpoint_every"): int,
    ("train", "seed"): int,
    ("evaluate", "holdout"): int,
    ("evaluate", "fid_samples"): int,
    ("evaluate", "fid_repeats"): int,
    ("evaluate", "eval_epochs"): int,
    ("evaluate", "edit_images"): int,
    ("evaluate", "recon_images"): int,
    ("evaluate", "inversion_samples"): int,
    ("evaluate", "seed"): int,
}

# Desk-scale defaults; the larger published-style widths are opt-in. The
# discriminator runs slower than the generator so it cannot saturate, and the
# latent dimension is sized to the synthetic family's nuisance factors so the
# latent box stays invertible.
DEFAULTS: dict[str, dict[str, Any]] = {
    "dataset": {"kind": "synthetic", "path": "", "resolution": 32, "n_images": 5000, "seed": 7},
    "network": {
        "latent_dim": 8,
        "base_channels": 32,
        "feature_dim_d": 192,
        "feature_dim_c": 192,
        "connection_hidden": "256,256",
    },
    "train": {
        "steps": 6000,
        "batch_size": 64,
        "lr_generator": 2e-4,
        "lr_discriminator": 5e-5,
        "lr_classifier": 2e-4,
        "lr_connection": 1e-3,
        "lambda_attr_real": 1.0,
        "lambda_attr_sampled": 1.0,
        "checkpoint_every": 1000,
        "seed": 0,
    },
    "evaluate": {
        "holdout": 500,
        "fid_samples": 1024,
        "fid_repeats": 10,
        "eval_epochs": 6,
        "edit_images": 200,
        "recon_images": 200,
        "inversion_samples": 512,
        "seed": 0,
    },
}


class ConfigError(ValueError):
    pass


def load_config_file(path: Path | str) -> dict[str, dict[str, Any]]:
    parser = configparser.ConfigParser()
    read = parser.read(path)
    if not read:
        raise ConfigError(f"config file {path} not found")
    values: dict[str, dict[str, Any]] = {}
    for section in parser.sections():
        for key, raw in parser.items(section):
            kind = _SCHEMA.get((section, key))
            if kind is None:
                raise ConfigError(f"unknown config key [{section}] {key}")
            try:
                values.setdefault(section, {})[key] = kind(raw)
            except ValueError:
                raise ConfigError(f"[{section}] {key}: cannot parse {raw!r} as {kind.__name__}") from None
    return values


def merge_settings(
    file_values: Mapping[str, Mapping[str, Any]] | None,
    overrides: Mapping[str, Mapping[str, Any]] | None = None,
) -> dict[str, dict[str, Any]]:
    """defaults < file < explicit flag overrides."""
    merged = {section: dict(values) for section, values in DEFAULTS.items()}
    for source in (file_values, overrides):
        if not source:
            continue
        for section, values in source.items():
            for key, value in values.items():
                if (section, key) not in _SCHEMA:
                    raise ConfigError(f"unknown config key [{section}] {key}")
                if value is not None:
                    merged[section][key] = value
    return merged


def _parse_hidden(raw: str) -> tuple[int, ...]:
    raw = raw.strip()
    if not raw:
        return ()
    try:
        return tuple(int(tok) for tok in raw.split(","))
    except ValueError:
        raise ConfigError(f"connection_hidden: cannot parse {raw!r}") from None


def dataset_attribute_count(settings: Mapping[str, Mapping[str, Any]]) -> int:
    d = settings["dataset"]
    if d["kind"] == "synthetic":
        return len(SYNTHETIC_ATTRIBUTES)
    if d["kind"] == "directory":
        attr_file = Path(d["path"]) / "attributes.txt"
        schema, _ = parse_attribute_file(attr_file.read_text())
        return schema.count
    raise ConfigError(f"dataset kind must be synthetic or directory, got {d['kind']!r}")


def build_network_config(settings: Mapping[str, Mapping[str, Any]]) -> NetworkConfig:
    n = settings["network"]
    return NetworkConfig(
        n_attributes=dataset_attribute_count(settings),
        latent_dim=n["latent_dim"],
        resolution=settings["dataset"]["resolution"],
        base_channels=n["base_channels"],
        feature_dim_d=n["feature_dim_d"],
        feature_dim_c=n["feature_dim_c"],
        connection_hidden=_parse_hidden(n["connection_hidden"]),
    )


def build_train_config(settings: Mapping[str, Mapping[str, Any]], out_dir: str, resume_from: str | None = None) -> TrainConfig:
    d, t = settings["dataset"], settings["train"]
    synthetic = None
    dataset_dir = None
    if d["kind"] == "synthetic":
        synthetic = SyntheticConfig(n_images=d["n_images"], seed=d["seed"], resolution=d["resolution"])
    else:
        dataset_dir = d["path"] or None
        if dataset_dir is None:
            raise ConfigError("dataset kind 'directory' requires a path")
    return TrainConfig(
        network=build_network_config(settings),
        steps=t["steps"],
        batch_size=t["batch_size"],
        dataset_dir=dataset_dir,
        synthetic=synthetic,
        lr_generator=t["lr_generator"],
        lr_discriminator=t["lr_discriminator"],
        lr_classifier=t["lr_classifier"],
        lr_connection=t["lr_connection"],
        lambda_attr_real=t["lambda_attr_real"],
        lambda_attr_sampled=t["lambda_attr_sampled"],
        checkpoint_every=t["checkpoint_every"],
        seed=t["seed"],
        out_dir=out_dir,
        resume_from=resume_from,
    )


@dataclass(frozen=True)
class EvaluationConfig:
    holdout: int = 500
    fid_samples: int = 1024
    fid_repeats: int = 10
    eval_epochs: int = 6
    edit_images: int = 200
    recon_images: int = 200
    inversion_samples: int = 512
    seed: int = 0


def build_evaluation_config(settings: Mapping[str, Mapping[str, Any]]) -> EvaluationConfig:
    e = settings["evaluate"]
    return EvaluationConfig(
        holdout=e["holdout"],
        fid_samples=e["fid_samples"],
        fid_repeats=e["fid_repeats"],
        eval_epochs=e["eval_epochs"],
        edit_images=e["edit_images"],
        recon_images=e["recon_images"],
        inversion_samples=e["inversion_samples"],
        seed=e["seed"],
    )


def write_settings(settings: Mapping[str, Mapping[str, Any]], path: Path | str) -> None:
    parser = configparser.ConfigParser()
    for section, values in settings.items():
        parser[section] = {key: str(value) for key, value in values.items()}
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w") as handle:
        parser.write(handle)
