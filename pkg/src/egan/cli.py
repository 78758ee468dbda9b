"""Command-line entry point covering the full lifecycle.

Exit codes: 0 success, 2 usage error, 3 non-finite-loss abort, 1 anything else.
EGAN_HOME overrides the default checkpoint root for relative checkpoint paths.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np

from . import config as cfg
from . import editing, imgio, training
from .checkpoint import Checkpoint, CheckpointError, load_checkpoint, resolve_latest
from .dataset import (
    SYNTHETIC_SCHEMA,
    SyntheticConfig,
    generate_synthetic_dataset,
    load_dataset,
    save_dataset,
)
from .models import sample_latents
from .training import NonFiniteLossError

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_USAGE = 2
EXIT_NUMERIC = 3


class UsageError(ValueError):
    pass


def _checkpoint_root() -> Path:
    return Path(os.environ.get("EGAN_HOME", "runs"))


def _load_ckpt(path_arg: str) -> Checkpoint:
    path = Path(path_arg)
    if not path.exists():
        candidate = _checkpoint_root() / path_arg
        if candidate.exists():
            path = candidate
    return load_checkpoint(resolve_latest(path))


def _parse_attribute_assignments(raw: str, schema_names: tuple[str, ...]) -> dict[str, float]:
    assignments = {}
    for item in raw.split(","):
        item = item.strip()
        if not item:
            continue
        if "=" not in item:
            raise UsageError(f"--set expects name=value pairs, got {item!r}")
        name, _, value_text = item.partition("=")
        name = name.strip()
        if name not in schema_names:
            raise UsageError(f"unknown attribute {name!r}; expected one of {schema_names}")
        try:
            value = float(value_text)
        except ValueError:
            raise UsageError(f"attribute value {value_text!r} is not a number") from None
        if not -1.0 <= value <= 1.0:
            raise UsageError(f"attribute value {value} outside [-1, 1]")
        assignments[name] = value
    if not assignments:
        raise UsageError("no attribute assignments given")
    return assignments


def _target_vector(source: np.ndarray, assignments: dict[str, float], names: tuple[str, ...]) -> np.ndarray:
    target = source.astype(np.float32).copy()
    for name, value in assignments.items():
        target[names.index(name)] = value
    return target


def _settings_from_args(args) -> dict:
    file_values = cfg.load_config_file(args.config) if getattr(args, "config", None) else None
    overrides: dict[str, dict] = {"dataset": {}, "train": {}, "evaluate": {}}
    for section, key, attr in (
        ("dataset", "kind", "dataset_kind"),
        ("dataset", "path", "dataset"),
        ("dataset", "resolution", "resolution"),
        ("dataset", "n_images", "n_images"),
        ("dataset", "seed", "data_seed"),
        ("train", "steps", "steps"),
        ("train", "batch_size", "batch_size"),
        ("train", "seed", "seed"),
        ("evaluate", "fid_samples", "fid_samples"),
        ("evaluate", "fid_repeats", "fid_repeats"),
        ("evaluate", "holdout", "holdout"),
        ("evaluate", "edit_images", "edit_images"),
        ("evaluate", "eval_epochs", "eval_epochs"),
        ("evaluate", "seed", "eval_seed"),
    ):
        value = getattr(args, attr, None)
        if value is not None:
            overrides[section][key] = value
    if getattr(args, "dataset", None):
        overrides["dataset"]["kind"] = "directory"
    return cfg.merge_settings(file_values, overrides)


def cmd_make_dataset(args) -> int:
    config = SyntheticConfig(n_images=args.n, seed=args.seed, resolution=args.resolution)
    dataset = generate_synthetic_dataset(config)
    save_dataset(dataset, SYNTHETIC_SCHEMA, args.out)
    print(f"wrote {len(dataset)} images to {args.out}")
    return EXIT_OK


def cmd_train(args) -> int:
    settings = _settings_from_args(args)
    out_dir = Path(args.out) if args.out else _checkpoint_root() / "train"
    train_config = cfg.build_train_config(settings, str(out_dir), resume_from=args.resume)
    out_dir.mkdir(parents=True, exist_ok=True)
    cfg.write_settings(settings, out_dir / "config.ini")

    def stream(metrics: training.StepMetrics) -> None:
        if metrics.step % args.print_every == 0 or metrics.step == train_config.steps:
            print(
                f"step {metrics.step}: d={metrics.loss_discriminator:.3f} "
                f"c={metrics.loss_classifier:.3f} g={metrics.loss_generator_total:.3f} "
                f"cn={metrics.loss_connection:.3f} D(x)={metrics.d_real_mean:.2f} "
                f"D(G)={metrics.d_fake_mean:.2f}",
                flush=True,
            )

    final = training.train(train_config, on_step=stream)
    _plot_training_curves(out_dir)
    print(f"final checkpoint: {final}")
    return EXIT_OK


def _plot_training_curves(run_dir: Path) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    records = training.read_metric_log(run_dir)
    if not records:
        return
    steps = [r["step"] for r in records]
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(10, 4))
    for key, label in (
        ("loss_discriminator", "discriminator"),
        ("loss_generator_total", "generator"),
        ("loss_classifier", "classifier"),
        ("loss_connection", "connection"),
    ):
        ax1.plot(steps, [r[key] for r in records], label=label, linewidth=0.8)
    ax1.set_xlabel("step")
    ax1.set_ylabel("loss")
    ax1.legend(fontsize=8)
    ax2.plot(steps, [r["d_real_mean"] for r in records], label="D(x)", linewidth=0.8)
    ax2.plot(steps, [r["d_fake_mean"] for r in records], label="D(G)", linewidth=0.8)
    ax2.axhline(0.5, color="gray", linestyle="--", linewidth=1)
    ax2.set_xlabel("step")
    ax2.set_ylabel("discriminator output")
    ax2.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(run_dir / "training_curves.png")
    plt.close(fig)


def cmd_edit(args) -> int:
    ckpt = _load_ckpt(args.ckpt)
    names = ckpt.schema.names
    if args.manifest:
        out_dir = Path(args.out_dir or "edits")
        out_dir.mkdir(parents=True, exist_ok=True)
        count = 0
        for line_no, line in enumerate(Path(args.manifest).read_text().splitlines(), start=1):
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            tokens = line.split()
            image = imgio.load_png(tokens[0])
            assignments = _parse_attribute_assignments(",".join(tokens[1:]), names)
            source = editing.predict_attributes(ckpt.state, image)
            edited = editing.edit_attributes(
                ckpt.state, image, _target_vector(source, assignments, names), source_attributes=source
            )
            imgio.save_png(edited, out_dir / f"edit_{line_no:04d}_{Path(tokens[0]).name}")
            count += 1
        print(f"wrote {count} edited images to {out_dir}")
        return EXIT_OK

    if not args.input or not args.set:
        raise UsageError("edit requires --in and --set (or --manifest)")
    image = imgio.load_png(args.input)
    assignments = _parse_attribute_assignments(args.set, names)
    source = editing.predict_attributes(ckpt.state, image)
    edited = editing.edit_attributes(
        ckpt.state, image, _target_vector(source, assignments, names), source_attributes=source
    )
    out = Path(args.out or "edited.png")
    imgio.save_png(edited, out)
    print(f"wrote {out}")
    return EXIT_OK


def cmd_generate(args) -> int:
    ckpt = _load_ckpt(args.ckpt)
    names = ckpt.schema.names
    if args.attrs:
        values = [v.strip() for v in args.attrs.split(",")]
        if len(values) != len(names):
            raise UsageError(f"--attrs expects {len(names)} comma-separated values ({names})")
        try:
            attrs = np.array([float(v) for v in values], dtype=np.float32)
        except ValueError:
            raise UsageError("--attrs values must be numbers") from None
        if attrs.min() < -1.0 or attrs.max() > 1.0:
            raise UsageError("--attrs values must lie in [-1, 1]")
    elif args.set:
        assignments = _parse_attribute_assignments(args.set, names)
        attrs = _target_vector(np.zeros(len(names), dtype=np.float32), assignments, names)
    else:
        raise UsageError("generate requires --attrs or --set")

    rng = np.random.default_rng(args.seed)
    batch_attrs = np.tile(attrs, (args.n, 1))
    latents = sample_latents(args.n, ckpt.state.config.latent_dim, rng)
    images = editing.generate_novel(ckpt.state, batch_attrs, latents=latents)
    out = Path(args.out or "generated.png")
    if args.n == 1:
        imgio.save_png(images[0], out)
    else:
        imgio.save_png(imgio.image_grid(list(images)), out)
    print(f"wrote {out}")
    return EXIT_OK


def cmd_interpolate(args) -> int:
    ckpt = _load_ckpt(args.ckpt)
    image_a = imgio.load_png(args.a)
    image_b = imgio.load_png(args.b)
    attrs_a = editing.predict_attributes(ckpt.state, image_a)
    attrs_b = editing.predict_attributes(ckpt.state, image_b)
    z_a = editing.invert_image(ckpt.state, image_a, attrs_a)
    z_b = editing.invert_image(ckpt.state, image_b, attrs_b)
    frames = editing.interpolate(ckpt.state, (z_a, attrs_a), (z_b, attrs_b), args.steps)
    out = Path(args.out or "interpolation.png")
    imgio.save_png(imgio.image_grid(frames, columns=len(frames)), out)
    if args.frames_dir:
        for i, frame in enumerate(frames):
            imgio.save_png(frame, Path(args.frames_dir) / f"frame_{i:03d}.png")
    print(f"wrote {out}")
    return EXIT_OK


def cmd_pose(args) -> int:
    ckpt = _load_ckpt(args.ckpt)
    image = imgio.load_png(args.input)
    frames = editing.pose_walk(ckpt.state, image, args.steps)
    out = Path(args.out or "pose_walk.png")
    imgio.save_png(imgio.image_grid(frames, columns=len(frames)), out)
    print(f"wrote {out}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    from . import evaluation

    ckpt = _load_ckpt(args.ckpt)
    settings = _settings_from_args(args)
    _, dataset = load_dataset(args.dataset)
    eval_config = cfg.build_evaluation_config(settings)
    result = evaluation.run_evaluation(ckpt, dataset, eval_config)
    out_dir = Path(args.out or "evaluation")
    evaluation.write_report(result, out_dir, ckpt=ckpt, dataset=dataset, seed=eval_config.seed)
    print((out_dir / "report.txt").read_text())
    print(f"report written to {out_dir}")
    return EXIT_OK


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    app = create_app(resolve_latest(Path(args.ckpt) if Path(args.ckpt).exists() else _checkpoint_root() / args.ckpt))
    uvicorn.run(app, host=args.host, port=args.port, log_level="info")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="egan", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("make-dataset", help="render a synthetic labeled dataset")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--n", type=int, default=5000)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--resolution", type=int, default=32, choices=(32, 64))
    p.set_defaults(handler=cmd_make_dataset)

    p = sub.add_parser("train", help="train the four networks")
    p.add_argument("--config", help="INI config file")
    p.add_argument("--out", help="run directory (default EGAN_HOME/train)")
    p.add_argument("--dataset", help="dataset directory (otherwise synthetic per config)")
    p.add_argument("--steps", type=int)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--n-images", dest="n_images", type=int)
    p.add_argument("--resolution", type=int, choices=(32, 64))
    p.add_argument("--data-seed", dest="data_seed", type=int)
    p.add_argument("--resume", help="checkpoint or run directory to resume from")
    p.add_argument("--print-every", dest="print_every", type=int, default=100)
    p.set_defaults(handler=cmd_train)

    p = sub.add_parser("edit", help="edit attributes of an image")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--in", dest="input", help="input image (PNG)")
    p.add_argument("--set", help="comma-separated name=value assignments in [-1, 1]")
    p.add_argument("--manifest", help="batch manifest: one '<image path> name=value ...' per line")
    p.add_argument("--out", help="output image path")
    p.add_argument("--out-dir", dest="out_dir", help="output directory for --manifest")
    p.set_defaults(handler=cmd_edit)

    p = sub.add_parser("generate", help="generate novel images with requested attributes")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--attrs", help="comma-separated attribute values in schema order")
    p.add_argument("--set", help="name=value assignments; unset attributes default to 0")
    p.add_argument("--n", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(handler=cmd_generate)

    p = sub.add_parser("interpolate", help="latent walk between two images")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--a", required=True)
    p.add_argument("--b", required=True)
    p.add_argument("--steps", type=int, default=8)
    p.add_argument("--out")
    p.add_argument("--frames-dir", dest="frames_dir")
    p.set_defaults(handler=cmd_interpolate)

    p = sub.add_parser("pose", help="walk between an image and its mirrored latent")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--steps", type=int, default=8)
    p.add_argument("--out")
    p.set_defaults(handler=cmd_pose)

    p = sub.add_parser("evaluate", help="run the metric suite against a checkpoint")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--dataset", required=True, help="labeled dataset directory")
    p.add_argument("--out", help="report directory")
    p.add_argument("--config", help="INI config file")
    p.add_argument("--fid-samples", dest="fid_samples", type=int)
    p.add_argument("--fid-repeats", dest="fid_repeats", type=int)
    p.add_argument("--holdout", type=int)
    p.add_argument("--edit-images", dest="edit_images", type=int)
    p.add_argument("--eval-epochs", dest="eval_epochs", type=int)
    p.add_argument("--seed", dest="eval_seed", type=int)
    p.set_defaults(handler=cmd_evaluate)

    p = sub.add_parser("serve", help="serve the inference API over a checkpoint")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.set_defaults(handler=cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.handler(args)
    except UsageError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except (ValueError, CheckpointError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except NonFiniteLossError as err:
        print(f"numeric abort: {err}", file=sys.stderr)
        if err.dump_path:
            print(f"diagnostics: {err.dump_path}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
