"""Command-line front end: ``synth``, ``train``, ``crop``, ``eval``, ``gradcheck``.

Exit codes: 0 success, 2 usage or input error, 3 training divergence,
4 gradient-check failure.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np
from PIL import Image as PILImage, ImageDraw

from . import checkpoint, gradcheck
from .config import RunConfig, default_config
from .data import generate_synthetic, load_dataset, manifest_checksum, read_image, write_dataset, write_image
from .errors import CropforgeError, TrainingDivergedError
from .estimator import crop_image
from .training import (
    ModelConfig,
    TrainingSchedule,
    TrainOptions,
    build_model,
    evaluate,
    predict_crop,
    prepare_sample,
    train,
)
from .unet import UNetConfig

logger = logging.getLogger("cropforge")

EXIT_OK, EXIT_INPUT, EXIT_DIVERGED, EXIT_GRADCHECK = 0, 2, 3, 4
SIDECAR_SCHEMA = 1

_CONFIG_FLAGS = {
    # flag dest -> RunConfig field
    "sigma": "sigma", "gamma": "gamma", "lam": "lam", "target_size": "target_size",
    "depth": "depth", "base_channels": "base_channels",
    "roi_grid": "roi_grid", "hidden": "hidden", "schedule": "schedule",
    "lr1": "lr1", "lr2": "lr2", "lr3": "lr3",
    "epochs1": "epochs1", "epochs2": "epochs2", "epochs3": "epochs3",
    "max_grad_norm": "max_grad_norm", "gt_mode": "gt_mode",
    "anchor_source": "anchor_source", "seed": "seed",
}


def _add_config_flags(p: argparse.ArgumentParser, training: bool) -> None:
    p.add_argument("--config", type=Path, help="key = value config file")
    p.add_argument("--sigma", type=float, help="soft binarization scale (default 0.01)")
    p.add_argument("--gamma", type=float, help="anchor width in standard deviations (default 3.0)")
    p.add_argument("--target-size", dest="target_size", type=int, help="shorter image side fed to the network (default 224)")
    if not training:
        return
    p.add_argument("--lam", type=float, help="offset loss weight (default 1.0)")
    p.add_argument("--depth", type=int)
    p.add_argument("--base-channels", dest="base_channels", type=int)
    p.add_argument("--roi-grid", dest="roi_grid", type=int)
    p.add_argument("--hidden", help="comma-separated FC widths (default 2048,1024)")
    p.add_argument("--schedule", choices=("standard", "toy"))
    for k in (1, 2, 3):
        p.add_argument(f"--lr{k}", type=float, help=f"stage {k} learning rate override")
        p.add_argument(f"--epochs{k}", type=int, help=f"stage {k} epoch count override")
    p.add_argument("--max-grad-norm", dest="max_grad_norm", type=float)
    p.add_argument("--gt-mode", dest="gt_mode", choices=("crop-box", "full-image"))
    p.add_argument("--anchor-source", dest="anchor_source", choices=("predicted", "ground-truth"))
    p.add_argument("--seed", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cropforge", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="write a synthetic dataset")
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--size", type=int, default=64)
    p.add_argument("--seed", type=int)
    p.add_argument("--channels", type=int, default=3, choices=(1, 3))
    p.add_argument("--out", type=Path, required=True)

    p = sub.add_parser("train", help="run the staged training schedule")
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True, help="checkpoint path")
    p.add_argument("--log", type=Path, help="loss log CSV (default: <out>.csv)")
    p.add_argument("--stages", default="1,2,3", help="comma-separated subset of stages to run")
    p.add_argument("--init", type=Path, help="start from this checkpoint instead of fresh weights")
    _add_config_flags(p, training=True)

    p = sub.add_parser("crop", help="crop one image")
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--image", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--emit-saliency", action="store_true")
    p.add_argument("--emit-anchor", action="store_true")
    _add_config_flags(p, training=False)

    p = sub.add_parser("eval", help="score a checkpoint on a dataset")
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--out", type=Path, help="per-sample CSV (default: stdout)")
    _add_config_flags(p, training=False)

    p = sub.add_parser("gradcheck", help="finite-difference check of every layer")
    p.add_argument("--seed", type=int)
    p.add_argument("--trials", type=int, default=10)
    p.add_argument("--epsilon", type=float, default=1e-5)
    return parser


def resolve_config(args: argparse.Namespace, base: RunConfig | None = None) -> RunConfig:
    """defaults (+ CROPFORGE_SEED) < saved checkpoint config < --config file < flags."""
    cfg = base or default_config()
    if getattr(args, "config", None) is not None:
        cfg = RunConfig.from_file(args.config, cfg)
    flags = {field: getattr(args, dest) for dest, field in _CONFIG_FLAGS.items() if hasattr(args, dest)}
    return cfg.updated(flags)


def config_path(ckpt: Path) -> Path:
    return ckpt.with_name(ckpt.name + ".cfg")


def _saved_config(ckpt: Path) -> RunConfig:
    path = config_path(ckpt)
    return RunConfig.from_file(path, default_config()) if path.exists() else default_config()


def schedule_from_config(cfg: RunConfig) -> TrainingSchedule:
    base = TrainingSchedule.toy() if cfg.schedule == "toy" else TrainingSchedule.standard()
    lrs = {k: v for k, v in ((1, cfg.lr1), (2, cfg.lr2), (3, cfg.lr3)) if v is not None}
    epochs = {k: v for k, v in ((1, cfg.epochs1), (2, cfg.epochs2), (3, cfg.epochs3)) if v is not None}
    return base.with_overrides(lrs, epochs)


# commands ----------------------------------------------------------------------

def cmd_synth(args) -> int:
    seed = args.seed if args.seed is not None else default_config().seed
    samples = generate_synthetic(args.count, args.size, seed, channels=args.channels)
    write_dataset(samples, args.out)
    print(f"wrote {len(samples)} samples to {args.out}")
    print(f"manifest_sha256={manifest_checksum(args.out)}")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = resolve_config(args)
    stages = sorted({int(s) for s in args.stages.split(",") if s.strip()})
    if not stages or any(s not in (1, 2, 3) for s in stages):
        raise CropforgeError(f"--stages must list stages from 1,2,3, got {args.stages!r}")
    samples = load_dataset(args.data)
    if not samples:
        raise CropforgeError(f"no images found under {args.data}")
    channels = samples[0].image.shape[2]
    if args.init is not None:
        params = checkpoint.load(args.init)
        model_cfg = ModelConfig.from_params(params)
    else:
        model_cfg = ModelConfig(
            unet=UNetConfig(cfg.depth, cfg.base_channels, channels, seed=cfg.seed),
            roi_grid=cfg.roi_grid,
            hidden=cfg.hidden_sizes,
        )
        params = build_model(model_cfg)
    stride = model_cfg.unet.stride
    data = [prepare_sample(s, cfg.target_size, stride) for s in samples]
    options = TrainOptions(
        sigma=cfg.sigma, gamma=cfg.gamma, lam=cfg.lam, gt_mode=cfg.gt_mode,
        anchor_source=cfg.anchor_source, seed=cfg.seed, max_grad_norm=cfg.max_grad_norm,
    )
    schedule = schedule_from_config(cfg).only(stages)
    _, log = train(params, data, schedule, options, model_cfg)

    args.out.parent.mkdir(parents=True, exist_ok=True)
    checkpoint.save(params, args.out)
    config_path(args.out).write_text(cfg.to_text())
    log_path = args.log or args.out.with_name(args.out.name + ".csv")
    with open(log_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["stage", "epoch", "mean_Ls", "mean_Lr", "total"])
        for e in log:
            writer.writerow([
                e.stage, e.epoch, repr(e.mean_saliency_loss),
                "" if e.mean_offset_loss is None else repr(e.mean_offset_loss), repr(e.total),
            ])
    print(f"checkpoint={args.out} log={log_path} epochs={len(log)}")
    return EXIT_OK


def _resize_map(saliency: np.ndarray, width: int, height: int) -> np.ndarray:
    if saliency.shape == (height, width):
        return saliency
    im = PILImage.fromarray(np.ascontiguousarray(saliency, dtype=np.float32))
    return np.clip(np.asarray(im.resize((width, height), PILImage.BILINEAR), dtype=np.float64), 0.0, 1.0)


def _draw_boxes(image: np.ndarray, boxes) -> PILImage.Image:
    arr = np.round(np.clip(image, 0, 1) * 255).astype(np.uint8)
    if arr.shape[2] == 1:
        arr = np.repeat(arr, 3, axis=2)
    canvas = PILImage.fromarray(arr)
    draw = ImageDraw.Draw(canvas)
    for rect, color in boxes:
        draw.rectangle([rect.x_min, rect.y_min, max(rect.x_max - 1, rect.x_min), max(rect.y_max - 1, rect.y_min)], outline=color)
    return canvas


def _match_channels(image: np.ndarray, channels: int) -> np.ndarray:
    """Replicate a grayscale image for a color model, or average color for a grayscale one."""
    if image.shape[2] == channels:
        return image
    if image.shape[2] == 1:
        return np.repeat(image, channels, axis=2)
    if channels == 1:
        return image.mean(axis=2, keepdims=True)
    raise CropforgeError(f"model expects {channels} channel(s), image has {image.shape[2]}")


def cmd_crop(args) -> int:
    params = checkpoint.load(args.checkpoint)
    cfg = resolve_config(args, _saved_config(args.checkpoint))
    model_cfg = ModelConfig.from_params(params)
    image = _match_channels(read_image(args.image), model_cfg.unet.input_channels)
    h, w = image.shape[:2]
    pred = predict_crop(params, image, cfg.sigma, cfg.gamma, cfg.target_size, model_cfg)
    args.out.parent.mkdir(parents=True, exist_ok=True)
    write_image(args.out, crop_image(image, pred.rect))
    sidecar = {
        "schema": SIDECAR_SCHEMA,
        "image": str(args.image),
        "image_size": {"width": w, "height": h},
        "rect": dict(zip(("x_min", "y_min", "x_max", "y_max"), pred.rect.as_list())),
        "anchor": dict(zip(("x_min", "y_min", "x_max", "y_max"), pred.anchor.as_list())),
        "offsets": dict(zip(("alpha_t", "alpha_b", "beta_t", "beta_b"), pred.offsets.as_array().tolist())),
        "scale": {"x": pred.scale[0], "y": pred.scale[1]},
        "sigma": cfg.sigma,
        "gamma": cfg.gamma,
        "timing_ms": pred.timing_ms,
    }
    stem = args.out.with_suffix("")
    if args.emit_saliency:
        path = Path(f"{stem}_saliency.png")
        write_image(path, _resize_map(pred.saliency, w, h))
        sidecar["saliency_path"] = str(path)
    if args.emit_anchor:
        path = Path(f"{stem}_anchor.png")
        _draw_boxes(image, [(pred.anchor, (0, 128, 255)), (pred.rect, (255, 40, 40))]).save(path)
        sidecar["anchor_path"] = str(path)
    sidecar_path = args.out.with_suffix(".json")
    sidecar_path.write_text(json.dumps(sidecar, indent=2) + "\n")
    print(json.dumps(sidecar["rect"]))
    return EXIT_OK


def cmd_eval(args) -> int:
    params = checkpoint.load(args.checkpoint)
    cfg = resolve_config(args, _saved_config(args.checkpoint))
    samples = load_dataset(args.data)
    report = evaluate(params, samples, cfg.sigma, cfg.gamma, cfg.target_size)
    for sid in report.skipped:
        print(f"warning: no ground-truth crop for {sid}; skipped", file=sys.stderr)
    if not report.records:
        print("error: no sample has a ground-truth crop", file=sys.stderr)
        return EXIT_INPUT
    write_eval_csv(report, args.out)
    print(report.summary())
    return EXIT_OK


def write_eval_csv(report, path: Path | None) -> None:
    fh = open(path, "w", newline="") if path is not None else sys.stdout
    try:
        writer = csv.writer(fh)
        writer.writerow(["id", "iou", "bde", "x_min", "y_min", "x_max", "y_max",
                         "gt_x_min", "gt_y_min", "gt_x_max", "gt_y_max"])
        for r in report.records:
            writer.writerow([r.id, repr(r.iou), repr(r.bde), *map(repr, r.predicted.as_list()), *map(repr, r.ground_truth.as_list())])
    finally:
        if path is not None:
            fh.close()


def cmd_gradcheck(args) -> int:
    seed = args.seed if args.seed is not None else default_config().seed
    results = gradcheck.run_suite(seed, args.trials, args.epsilon)
    failed = []
    print(f"{'op':<18} {'max_rel_error':>14}  status")
    for op, err in results.items():
        ok = err < gradcheck.TOLERANCE
        if not ok:
            failed.append(op)
        print(f"{op:<18} {err:>14.3e}  {'PASS' if ok else 'FAIL'}")
    if failed:
        print(f"gradient check failed for: {', '.join(failed)}", file=sys.stderr)
        return EXIT_GRADCHECK
    return EXIT_OK


COMMANDS = {"synth": cmd_synth, "train": cmd_train, "crop": cmd_crop, "eval": cmd_eval, "gradcheck": cmd_gradcheck}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    if args.command == "synth" and args.count < 1:
        parser.error("--count must be at least 1")
    try:
        return COMMANDS[args.command](args)
    except TrainingDivergedError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (CropforgeError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
