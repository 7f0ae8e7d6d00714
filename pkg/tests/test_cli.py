import csv
import json

import numpy as np
import pytest
from PIL import Image

from cropforge import checkpoint, crop_layers
from cropforge.cli import main
from cropforge.config import SEED_ENV
from cropforge.data import load_dataset, write_dataset
from cropforge.training import predict_crop

TINY = ["--depth", "2", "--base-channels", "2", "--roi-grid", "2", "--hidden", "16,8",
        "--target-size", "32", "--schedule", "toy"]


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    assert main(["synth", "--count", "3", "--size", "32", "--seed", "5", "--out", str(root / "data")]) == 0
    assert main(["train", "--data", str(root / "data"), "--out", str(root / "m.ckpt"), *TINY]) == 0
    return root


def synth_checksum(capsys, *args):
    assert main(["synth", *args]) == 0
    return capsys.readouterr().out.strip().splitlines()[-1]


def test_synth_is_deterministic(tmp_path, capsys):
    a = synth_checksum(capsys, "--count", "4", "--size", "32", "--seed", "7", "--out", str(tmp_path / "a"))
    b = synth_checksum(capsys, "--count", "4", "--size", "32", "--seed", "7", "--out", str(tmp_path / "b"))
    assert a == b and a.startswith("manifest_sha256=")
    rows = (tmp_path / "a" / "crops.csv").read_text().strip().splitlines()
    assert len(rows) == 1 + 4  # header + one row per image


def test_synth_seed_from_environment(tmp_path, capsys, monkeypatch):
    explicit = synth_checksum(capsys, "--count", "2", "--size", "32", "--seed", "21", "--out", str(tmp_path / "a"))
    monkeypatch.setenv(SEED_ENV, "21")
    implied = synth_checksum(capsys, "--count", "2", "--size", "32", "--out", str(tmp_path / "b"))
    assert explicit == implied


def test_zero_count_is_usage_error(tmp_path):
    with pytest.raises(SystemExit) as info:
        main(["synth", "--count", "0", "--out", str(tmp_path)])
    assert info.value.code == 2


def test_training_log_has_one_row_per_epoch(workspace):
    with open(workspace / "m.ckpt.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert [(r["stage"], r["epoch"]) for r in rows] == (
        [("1", str(e)) for e in range(1, 5)] + [("2", str(e)) for e in range(1, 7)] + [("3", "1"), ("3", "2")]
    )
    assert rows[0]["mean_Lr"] == "" and rows[-1]["mean_Lr"] != ""
    assert (workspace / "m.ckpt.cfg").read_text().count("=") > 5


def test_stage_subset(workspace, tmp_path):
    log = tmp_path / "log.csv"
    assert main(["train", "--data", str(workspace / "data"), "--out", str(tmp_path / "s1.ckpt"),
                 "--log", str(log), "--stages", "1", *TINY]) == 0
    stages = {r["stage"] for r in csv.DictReader(open(log))}
    assert stages == {"1"}


def test_retraining_reproduces_checkpoint(workspace, tmp_path):
    out = tmp_path / "again.ckpt"
    assert main(["train", "--data", str(workspace / "data"), "--out", str(out), *TINY]) == 0
    assert out.read_bytes() == (workspace / "m.ckpt").read_bytes()
    assert (tmp_path / "again.ckpt.csv").read_bytes() == (workspace / "m.ckpt.csv").read_bytes()


def test_divergence_exit_code(workspace, tmp_path, capsys):
    assert main(["train", "--data", str(workspace / "data"), "--out", str(tmp_path / "x.ckpt"),
                 "--config", str(_write(tmp_path / "lr.cfg", "lr1 = 1e300\n")), *TINY]) == 3
    assert "stage 1" in capsys.readouterr().err


def _write(path, text):
    path.write_text(text)
    return path


def test_crop_outputs(workspace, tmp_path):
    image = workspace / "data" / "images" / "00001.png"
    out = tmp_path / "crop.png"
    assert main(["crop", "--checkpoint", str(workspace / "m.ckpt"), "--image", str(image),
                 "--out", str(out), "--emit-saliency", "--emit-anchor"]) == 0
    meta = json.loads(out.with_suffix(".json").read_text())
    assert meta["schema"] == 1
    r = meta["rect"]
    assert 0 <= r["x_min"] <= r["x_max"] <= 32 and 0 <= r["y_min"] <= r["y_max"] <= 32
    assert set(meta["offsets"]) == {"alpha_t", "alpha_b", "beta_t", "beta_b"}
    assert meta["timing_ms"]["total"] > 0
    with Image.open(tmp_path / "crop_saliency.png") as sal:
        assert sal.mode == "L" and sal.size == (32, 32)
    assert (tmp_path / "crop_anchor.png").exists()
    with Image.open(out) as cropped:
        assert cropped.size[0] <= 32 and cropped.size[1] <= 32


def test_crop_accepts_pgm(workspace, tmp_path):
    pgm = tmp_path / "gray.pgm"
    Image.fromarray((np.random.default_rng(0).random((32, 48)) * 255).astype(np.uint8)).save(pgm)
    # the model is RGB; the grayscale input is replicated across channels
    assert main(["crop", "--checkpoint", str(workspace / "m.ckpt"), "--image", str(pgm),
                 "--out", str(tmp_path / "g.png")]) == 0
    meta = json.loads((tmp_path / "g.json").read_text())
    assert meta["image_size"] == {"width": 48, "height": 32}
    assert meta["rect"]["x_max"] <= 48 and meta["rect"]["y_max"] <= 32


def test_crop_unreadable_input(workspace, tmp_path):
    bad = tmp_path / "bad.png"
    bad.write_bytes(b"not an image")
    assert main(["crop", "--checkpoint", str(workspace / "m.ckpt"), "--image", str(bad),
                 "--out", str(tmp_path / "o.png")]) == 2
    assert main(["crop", "--checkpoint", str(tmp_path / "missing.ckpt"), "--image", str(bad),
                 "--out", str(tmp_path / "o.png")]) == 2


def test_eval_rows_and_summary(workspace, tmp_path, capsys):
    out = tmp_path / "eval.csv"
    assert main(["eval", "--checkpoint", str(workspace / "m.ckpt"), "--data", str(workspace / "data"),
                 "--out", str(out)]) == 0
    rows = list(csv.DictReader(open(out)))
    assert [r["id"] for r in rows] == ["00000", "00001", "00002"]
    summary = capsys.readouterr().out.strip().splitlines()[-1]
    mean_iou = float(summary.split()[0].split("=")[1])
    assert mean_iou == pytest.approx(np.mean([float(r["iou"]) for r in rows]), abs=1e-6)


def test_eval_with_ground_truth_equal_to_predictions(workspace, tmp_path, capsys):
    # relabel the dataset with the model's own crops: a perfect-oracle setup
    params = checkpoint.load(workspace / "m.ckpt")
    data = load_dataset(workspace / "data")
    for s in data:
        s.gt_crop = predict_crop(params, s.image, target_size=32).rect
    write_dataset(data, tmp_path / "oracle")
    assert main(["eval", "--checkpoint", str(workspace / "m.ckpt"), "--data", str(tmp_path / "oracle")]) == 0
    assert capsys.readouterr().out.strip().splitlines()[-1].startswith("mean_iou=1.000000 mean_bde=0.000000")


def test_eval_without_any_ground_truth(workspace, tmp_path):
    data = load_dataset(workspace / "data")
    write_dataset(data, tmp_path / "d")
    (tmp_path / "d" / "crops.csv").write_text("id,x_min,y_min,x_max,y_max\n")
    assert main(["eval", "--checkpoint", str(workspace / "m.ckpt"), "--data", str(tmp_path / "d")]) == 2


def test_gradcheck_passes_and_lists_layers(capsys):
    assert main(["gradcheck", "--trials", "2"]) == 0
    out = capsys.readouterr().out
    for row in ("soft_binarize", "anchor_region", "conv2d", "maxpool", "fc", "sigmoid", "relu", "roi_pool"):
        assert row in out


def test_gradcheck_catches_corrupted_centroid_derivative(monkeypatch, capsys):
    original = crop_layers._centroid_grad
    monkeypatch.setattr(crop_layers, "_centroid_grad", lambda coord, m00, m1: -original(coord, m00, m1))
    assert main(["gradcheck", "--trials", "1"]) == 4
    captured = capsys.readouterr()
    assert "anchor_region" in captured.err
    assert "soft_binarize" not in captured.err
