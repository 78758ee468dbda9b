"""End-to-end evaluation of a trained checkpoint against a labeled dataset.

Produces a structured text report, a delimited metrics table, a JSON dump, and
matplotlib figures, mirroring the quality / reconstruction / editing split of
the quantitative protocol (distance over 10 repetitions reported mean +- std).
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from . import metrics as mt
from .checkpoint import Checkpoint
from .config import EvaluationConfig
from .dataset import (
    SYNTHETIC_ATTRIBUTES,
    AttributeSchema,
    LabeledImage,
    analytic_attribute_oracle,
    sample_random_attributes,
    split_dataset,
)
from .editing import invert_image, reconstruct
from .models import ModelState, generator_forward, sample_latents

INDEPENDENT_UNIFORM_BASELINE = 2.0 / 3.0  # mean |a - b| for independent U[-1,1] draws


@dataclass
class EvaluationResult:
    checkpoint_id: str
    attribute_names: tuple[str, ...]
    n_train: int
    n_holdout: int
    fid_mean: float
    fid_std: float
    fid_noise_mean: float
    fid_noise_std: float
    fid_repeats: int
    ssim_mean: float
    ssim_std: float
    psnr_mean: float
    psnr_std: float
    eval_classifier_accuracy: list[float]
    edit_accuracy_classifier: list[float]
    edit_preservation_classifier: list[float]
    edit_accuracy_oracle: list[float] = field(default_factory=list)
    edit_preservation_oracle: list[float] = field(default_factory=list)
    inversion_mae: float = math.nan
    inversion_baseline: float = INDEPENDENT_UNIFORM_BASELINE


def oracle_detector(images: np.ndarray) -> np.ndarray:
    """Batch adapter over the analytic synthetic-attribute oracle."""
    return np.stack([analytic_attribute_oracle(im) for im in images])


def sample_generated(state: ModelState, schema: AttributeSchema, count: int, rng: np.random.Generator,
                     batch_size: int = 256) -> np.ndarray:
    """Fresh novel samples: uniform latents with Bernoulli(0.5) attribute vectors."""
    chunks = []
    remaining = count
    while remaining > 0:
        n = min(batch_size, remaining)
        z = sample_latents(n, state.config.latent_dim, rng)
        y = sample_random_attributes(n, schema, rng)
        chunks.append(generator_forward(state, z, y))
        remaining -= n
    return np.concatenate(chunks, axis=0)


def reconstruction_quality(state: ModelState, images: np.ndarray,
                           labels: np.ndarray) -> tuple[float, float, float, float]:
    """SSIM / PSNR mean and std between held-out images and their reconstructions."""
    recon = reconstruct(state, images, labels)
    ssims = [mt.ssim(a, b) for a, b in zip(images, recon)]
    psnrs = [mt.psnr(a, b) for a, b in zip(images, recon)]
    return (
        float(np.mean(ssims)),
        float(np.std(ssims)),
        float(np.mean(psnrs)),
        float(np.std(psnrs)),
    )


def inversion_error(state: ModelState, schema: AttributeSchema, count: int,
                    rng: np.random.Generator, batch_size: int = 256) -> float:
    """Mean |z - recovered z| over fresh generator samples."""
    errors = []
    remaining = count
    while remaining > 0:
        n = min(batch_size, remaining)
        z = sample_latents(n, state.config.latent_dim, rng)
        y = sample_random_attributes(n, schema, rng)
        images = generator_forward(state, z, y)
        recovered = invert_image(state, images, y)
        errors.append(np.abs(z - recovered).mean(axis=1))
        remaining -= n
    return float(np.concatenate(errors).mean())


def run_evaluation(
    ckpt: Checkpoint,
    dataset: Sequence[LabeledImage],
    config: EvaluationConfig = EvaluationConfig(),
    eval_classifier: mt.EvalClassifier | None = None,
    eval_classifier_accuracy: np.ndarray | None = None,
) -> EvaluationResult:
    state, schema = ckpt.state, ckpt.schema
    rng = np.random.default_rng(config.seed)
    train_split, holdout = split_dataset(dataset, min(config.holdout, len(dataset) - 1))
    holdout_images = np.stack([item.pixels for item in holdout])
    holdout_labels = np.stack([item.attributes for item in holdout])
    real_pool = np.stack([item.pixels for item in train_split])

    if eval_classifier is None:
        eval_classifier, eval_classifier_accuracy = mt.train_eval_classifier(
            train_split,
            mt.EvalClassifierConfig(epochs=config.eval_epochs, seed=config.seed),
        )

    sample_size = min(config.fid_samples, len(real_pool))
    generated_pool = sample_generated(state, schema, config.fid_repeats * sample_size, rng)
    noise_pool = rng.uniform(-1.0, 1.0, size=generated_pool.shape).astype(np.float32)

    def repeated_fid(pool: np.ndarray) -> tuple[float, float]:
        values = []
        for rep in range(config.fid_repeats):
            idx = rng.choice(len(real_pool), size=sample_size, replace=False)
            real_dist = mt.extract_features(real_pool[idx], eval_classifier.features)
            fake = pool[rep * sample_size : (rep + 1) * sample_size]
            fake_dist = mt.extract_features(fake, eval_classifier.features)
            values.append(mt.compute_fid(real_dist, fake_dist))
        return float(np.mean(values)), float(np.std(values))

    fid_mean, fid_std = repeated_fid(generated_pool)
    fid_noise_mean, fid_noise_std = repeated_fid(noise_pool)

    n_recon = min(config.recon_images, len(holdout))
    ssim_mean, ssim_std, psnr_mean, psnr_std = reconstruction_quality(
        state, holdout_images[:n_recon], holdout_labels[:n_recon]
    )

    n_edit = min(config.edit_images, len(holdout))
    report_cls = mt.evaluate_editing(
        state, eval_classifier.predict, holdout_images[:n_edit], holdout_labels[:n_edit]
    )
    if schema.names == SYNTHETIC_ATTRIBUTES:
        report_oracle = mt.evaluate_editing(
            state, oracle_detector, holdout_images[:n_edit], holdout_labels[:n_edit]
        )
        oracle_acc = list(map(float, report_oracle.accuracy))
        oracle_pres = list(map(float, report_oracle.preservation))
    else:
        oracle_acc, oracle_pres = [], []

    mae = inversion_error(state, schema, config.inversion_samples, rng)

    return EvaluationResult(
        checkpoint_id=ckpt.checkpoint_id,
        attribute_names=schema.names,
        n_train=len(train_split),
        n_holdout=len(holdout),
        fid_mean=fid_mean,
        fid_std=fid_std,
        fid_noise_mean=fid_noise_mean,
        fid_noise_std=fid_noise_std,
        fid_repeats=config.fid_repeats,
        ssim_mean=ssim_mean,
        ssim_std=ssim_std,
        psnr_mean=psnr_mean,
        psnr_std=psnr_std,
        eval_classifier_accuracy=list(map(float, eval_classifier_accuracy)),
        edit_accuracy_classifier=list(map(float, report_cls.accuracy)),
        edit_preservation_classifier=list(map(float, report_cls.preservation)),
        edit_accuracy_oracle=oracle_acc,
        edit_preservation_oracle=oracle_pres,
        inversion_mae=mae,
    )


def _report_text(result: EvaluationResult) -> str:
    lines = [
        f"evaluation report for checkpoint {result.checkpoint_id}",
        f"train images: {result.n_train}   held-out images: {result.n_holdout}",
        "",
        "[generation quality]",
        f"feature distance (generated vs real), {result.fid_repeats} reps: {result.fid_mean:.4f} +- {result.fid_std:.4f}",
        f"feature distance (uniform noise vs real):        {result.fid_noise_mean:.4f} +- {result.fid_noise_std:.4f}",
        "",
        "[reconstruction]",
        f"ssim: {result.ssim_mean:.4f} +- {result.ssim_std:.4f}",
        f"psnr: {result.psnr_mean:.2f} +- {result.psnr_std:.2f} dB",
        "",
        "[inversion]",
        f"mean |z - recovered z| on fresh samples: {result.inversion_mae:.4f}"
        f" (independent-uniform baseline {result.inversion_baseline:.4f})",
        "",
        "[evaluation classifier held-out accuracy]",
    ]
    for name, acc in zip(result.attribute_names, result.eval_classifier_accuracy):
        lines.append(f"  {name}: {acc:.4f}")
    lines.append("")
    lines.append("[single-attribute edit accuracy]")
    header = f"  {'attribute':<20} {'classifier':>10}"
    if result.edit_accuracy_oracle:
        header += f" {'oracle':>10}"
    lines.append(header)
    for i, name in enumerate(result.attribute_names):
        row = f"  {name:<20} {result.edit_accuracy_classifier[i]:>10.4f}"
        if result.edit_accuracy_oracle:
            row += f" {result.edit_accuracy_oracle[i]:>10.4f}"
        lines.append(row)
    lines.append("")
    lines.append("[unedited-attribute preservation]")
    for i, name in enumerate(result.attribute_names):
        row = f"  {name:<20} {result.edit_preservation_classifier[i]:>10.4f}"
        if result.edit_preservation_oracle:
            row += f" {result.edit_preservation_oracle[i]:>10.4f}"
        lines.append(row)
    return "\n".join(lines) + "\n"


def _write_csv(result: EvaluationResult, path: Path) -> None:
    with path.open("w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["metric", "attribute", "value"])
        writer.writerow(["fid_mean", "", f"{result.fid_mean:.6f}"])
        writer.writerow(["fid_std", "", f"{result.fid_std:.6f}"])
        writer.writerow(["fid_noise_mean", "", f"{result.fid_noise_mean:.6f}"])
        writer.writerow(["fid_noise_std", "", f"{result.fid_noise_std:.6f}"])
        writer.writerow(["ssim_mean", "", f"{result.ssim_mean:.6f}"])
        writer.writerow(["ssim_std", "", f"{result.ssim_std:.6f}"])
        writer.writerow(["psnr_mean", "", f"{result.psnr_mean:.6f}"])
        writer.writerow(["psnr_std", "", f"{result.psnr_std:.6f}"])
        writer.writerow(["inversion_mae", "", f"{result.inversion_mae:.6f}"])
        for i, name in enumerate(result.attribute_names):
            writer.writerow(["eval_classifier_accuracy", name, f"{result.eval_classifier_accuracy[i]:.6f}"])
            writer.writerow(["edit_accuracy_classifier", name, f"{result.edit_accuracy_classifier[i]:.6f}"])
            writer.writerow(
                ["edit_preservation_classifier", name, f"{result.edit_preservation_classifier[i]:.6f}"]
            )
            if result.edit_accuracy_oracle:
                writer.writerow(["edit_accuracy_oracle", name, f"{result.edit_accuracy_oracle[i]:.6f}"])
                writer.writerow(["edit_preservation_oracle", name, f"{result.edit_preservation_oracle[i]:.6f}"])


def _figure_edit_accuracy(result: EvaluationResult, path: Path) -> None:
    names = list(result.attribute_names)
    x = np.arange(len(names))
    fig, ax = plt.subplots(figsize=(7, 4))
    width = 0.35 if result.edit_accuracy_oracle else 0.6
    ax.bar(x - (width / 2 if result.edit_accuracy_oracle else 0), result.edit_accuracy_classifier,
           width, label="eval classifier")
    if result.edit_accuracy_oracle:
        ax.bar(x + width / 2, result.edit_accuracy_oracle, width, label="analytic oracle")
    ax.axhline(0.7, color="gray", linestyle="--", linewidth=1)
    ax.set_xticks(x)
    ax.set_xticklabels(names, rotation=20, ha="right")
    ax.set_ylim(0, 1.05)
    ax.set_ylabel("single-attribute edit accuracy")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def _figure_quality(result: EvaluationResult, path: Path) -> None:
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(8, 4))
    ax1.bar(["generated", "uniform noise"], [result.fid_mean, result.fid_noise_mean],
            yerr=[result.fid_std, result.fid_noise_std], color=["tab:blue", "tab:gray"])
    ax1.set_ylabel("feature distance to real")
    ax2.bar(["ssim"], [result.ssim_mean], yerr=[result.ssim_std], color="tab:green")
    ax2.set_ylim(0, 1)
    ax2.set_ylabel("reconstruction ssim")
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def _figure_examples(ckpt: Checkpoint, dataset: Sequence[LabeledImage], result: EvaluationResult,
                     path: Path, seed: int) -> None:
    state, schema = ckpt.state, ckpt.schema
    rng = np.random.default_rng(seed)
    originals = [dataset[-(i + 1)].pixels for i in range(4)]
    labels = np.stack([dataset[-(i + 1)].attributes for i in range(4)])
    recon = reconstruct(state, np.stack(originals), labels)
    novel = sample_generated(state, schema, 4, rng)
    fig, axes = plt.subplots(3, 4, figsize=(8, 6))
    for col in range(4):
        axes[0][col].imshow((originals[col] + 1) / 2)
        axes[1][col].imshow((recon[col] + 1) / 2)
        axes[2][col].imshow((novel[col] + 1) / 2)
    for row, label in zip(axes, ["held-out", "reconstruction", "novel sample"]):
        row[0].set_ylabel(label, fontsize=9)
        for ax in row:
            ax.set_xticks([])
            ax.set_yticks([])
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def write_report(
    result: EvaluationResult,
    out_dir: Path | str,
    ckpt: Checkpoint | None = None,
    dataset: Sequence[LabeledImage] | None = None,
    seed: int = 0,
) -> Path:
    """Write report.txt / report.json / metrics.csv plus figures under out_dir."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "report.txt").write_text(_report_text(result))
    (out_dir / "report.json").write_text(json.dumps(asdict(result), indent=2, sort_keys=True) + "\n")
    _write_csv(result, out_dir / "metrics.csv")
    figures = out_dir / "figures"
    figures.mkdir(exist_ok=True)
    _figure_edit_accuracy(result, figures / "edit_accuracy.png")
    _figure_quality(result, figures / "quality.png")
    if ckpt is not None and dataset is not None:
        _figure_examples(ckpt, dataset, result, figures / "examples.png", seed)
    return out_dir
