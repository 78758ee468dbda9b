import json
from pathlib import Path

import numpy as np
import pytest

from egan import dataset as ds
from egan import imgio
from egan.cli import main


def tree_bytes(root: Path) -> dict[str, bytes]:
    return {str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """Dataset plus a 3-step checkpoint shared by the command tests."""
    root = tmp_path_factory.mktemp("cli")
    assert main(["make-dataset", "--out", str(root / "data"), "--n", "48", "--seed", "7"]) == 0
    assert (
        main(
            [
                "train", "--out", str(root / "run"), "--dataset", str(root / "data"),
                "--steps", "3", "--batch-size", "8", "--print-every", "10",
            ]
        )
        == 0
    )
    return root


class TestMakeDataset:
    def test_deterministic_directories(self, tmp_path):
        args = ["make-dataset", "--n", "20", "--seed", "5"]
        assert main(args + ["--out", str(tmp_path / "a")]) == 0
        assert main(args + ["--out", str(tmp_path / "b")]) == 0
        assert tree_bytes(tmp_path / "a") == tree_bytes(tmp_path / "b")

    def test_missing_out_is_usage_error(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["make-dataset", "--n", "5"])
        assert exc.value.code == 2
        assert "usage" in capsys.readouterr().err

    def test_output_reparses(self, workspace):
        schema, data = ds.load_dataset(workspace / "data")
        assert schema.names == ds.SYNTHETIC_SCHEMA.names
        assert len(data) == 48


class TestTrain:
    def test_writes_checkpoint_and_log(self, workspace):
        assert (workspace / "run" / "checkpoints" / "step_000003").is_dir()
        assert (workspace / "run" / "metrics.jsonl").exists()
        assert (workspace / "run" / "config.ini").exists()
        assert (workspace / "run" / "training_curves.png").exists()

    def test_resume_continues_step_counter(self, workspace, tmp_path):
        rc = main(
            [
                "train", "--out", str(tmp_path / "resumed"), "--dataset", str(workspace / "data"),
                "--steps", "5", "--batch-size", "8", "--resume", str(workspace / "run"),
                "--print-every", "10",
            ]
        )
        assert rc == 0
        latest = json.loads((tmp_path / "resumed" / "checkpoints" / "latest.json").read_text())
        assert latest["step"] == 5

    def test_nan_abort_exits_3(self, workspace, tmp_path):
        config = tmp_path / "explode.ini"
        config.write_text("[train]\nlr_discriminator = 1e30\nlr_generator = 1e30\n")
        rc = main(
            [
                "train", "--config", str(config), "--out", str(tmp_path / "boom"),
                "--dataset", str(workspace / "data"), "--steps", "50", "--batch-size", "8",
                "--print-every", "1000",
            ]
        )
        assert rc == 3
        assert list((tmp_path / "boom").glob("failure_step_*"))


class TestEditGenerate:
    def test_edit_writes_image(self, workspace, tmp_path):
        source = workspace / "data" / "images" / "synthetic_000000.png"
        out = tmp_path / "edited.png"
        rc = main(
            [
                "edit", "--ckpt", str(workspace / "run"), "--in", str(source),
                "--set", "red_tint=1", "--out", str(out),
            ]
        )
        assert rc == 0
        assert imgio.load_png(out).shape == (32, 32, 3)

    def test_edit_range_violation_exits_2(self, workspace, tmp_path):
        source = workspace / "data" / "images" / "synthetic_000000.png"
        rc = main(
            [
                "edit", "--ckpt", str(workspace / "run"), "--in", str(source),
                "--set", "red_tint=2", "--out", str(tmp_path / "x.png"),
            ]
        )
        assert rc == 2

    def test_edit_unknown_attribute_exits_2(self, workspace, tmp_path):
        source = workspace / "data" / "images" / "synthetic_000000.png"
        rc = main(
            ["edit", "--ckpt", str(workspace / "run"), "--in", str(source), "--set", "sparkles=1"]
        )
        assert rc == 2

    def test_edit_manifest(self, workspace, tmp_path):
        manifest = tmp_path / "plan.txt"
        img = workspace / "data" / "images" / "synthetic_000001.png"
        manifest.write_text(f"{img} red_tint=1 border=0\n")
        rc = main(
            [
                "edit", "--ckpt", str(workspace / "run"), "--manifest", str(manifest),
                "--out-dir", str(tmp_path / "edits"),
            ]
        )
        assert rc == 0
        assert len(list((tmp_path / "edits").glob("*.png"))) == 1

    def test_generate_grid(self, workspace, tmp_path):
        out = tmp_path / "grid.png"
        rc = main(
            [
                "generate", "--ckpt", str(workspace / "run"), "--attrs", "1,0,1,0",
                "--n", "16", "--seed", "3", "--out", str(out),
            ]
        )
        assert rc == 0
        grid = imgio.load_png(out)
        assert grid.shape == (4 * 32, 4 * 32, 3)

    def test_generate_seed_reproducible(self, workspace, tmp_path):
        args = ["generate", "--ckpt", str(workspace / "run"), "--set", "red_tint=1", "--seed", "11"]
        assert main(args + ["--out", str(tmp_path / "a.png")]) == 0
        assert main(args + ["--out", str(tmp_path / "b.png")]) == 0
        assert (tmp_path / "a.png").read_bytes() == (tmp_path / "b.png").read_bytes()

    def test_generate_wrong_attr_count_exits_2(self, workspace):
        rc = main(["generate", "--ckpt", str(workspace / "run"), "--attrs", "1,0"])
        assert rc == 2


class TestSequences:
    def test_interpolate_strip(self, workspace, tmp_path):
        a = workspace / "data" / "images" / "synthetic_000000.png"
        b = workspace / "data" / "images" / "synthetic_000001.png"
        out = tmp_path / "strip.png"
        rc = main(
            [
                "interpolate", "--ckpt", str(workspace / "run"), "--a", str(a), "--b", str(b),
                "--steps", "6", "--out", str(out),
            ]
        )
        assert rc == 0
        assert imgio.load_png(out).shape == (32, 6 * 32, 3)

    def test_pose_strip(self, workspace, tmp_path):
        source = workspace / "data" / "images" / "synthetic_000002.png"
        out = tmp_path / "pose.png"
        rc = main(
            ["pose", "--ckpt", str(workspace / "run"), "--in", str(source), "--steps", "4", "--out", str(out)]
        )
        assert rc == 0
        assert imgio.load_png(out).shape == (32, 4 * 32, 3)


class TestEvaluate:
    def test_report_contents(self, workspace, tmp_path):
        out = tmp_path / "eval"
        rc = main(
            [
                "evaluate", "--ckpt", str(workspace / "run"), "--dataset", str(workspace / "data"),
                "--out", str(out), "--fid-samples", "24", "--fid-repeats", "3",
                "--holdout", "12", "--edit-images", "6", "--eval-epochs", "1",
            ]
        )
        assert rc == 0
        report = json.loads((out / "report.json").read_text())
        for key in ("fid_mean", "fid_std", "ssim_mean", "ssim_std", "psnr_mean", "psnr_std"):
            assert key in report
        assert len(report["edit_accuracy_classifier"]) == 4
        assert len(report["edit_accuracy_oracle"]) == 4
        assert report["fid_repeats"] == 3
        text = (out / "report.txt").read_text()
        assert "+-" in text and "edit accuracy" in text
        assert (out / "metrics.csv").exists()
        assert (out / "figures" / "edit_accuracy.png").exists()
        assert (out / "figures" / "quality.png").exists()

    def test_missing_dataset_exits_nonzero(self, workspace, tmp_path):
        rc = main(
            ["evaluate", "--ckpt", str(workspace / "run"), "--dataset", str(tmp_path / "nope")]
        )
        assert rc in (1, 2)


class TestEganHome:
    def test_relative_checkpoint_resolves_under_egan_home(self, workspace, tmp_path, monkeypatch):
        monkeypatch.setenv("EGAN_HOME", str(workspace))
        out = tmp_path / "home.png"
        rc = main(["generate", "--ckpt", "run", "--set", "border=1", "--out", str(out)])
        assert rc == 0
        assert out.exists()
