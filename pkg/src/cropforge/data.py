"""Synthetic cropping data and the on-disk dataset layout.

Layout::

    <root>/images/<id>.png      RGB (or grayscale) image
    <root>/saliency/<id>.png    8-bit grayscale saliency mask
    <root>/crops.csv            id,x_min,y_min,x_max,y_max  (pixels)
"""
from __future__ import annotations

import csv
import hashlib
import logging
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image as PILImage

from .errors import ParameterError
from .geometry import Rect

logger = logging.getLogger(__name__)

CROP_MARGIN = 0.25


@dataclass
class SyntheticSample:
    id: str
    image: np.ndarray  # H x W x C in [0, 1]
    gt_saliency: np.ndarray | None  # H x W in [0, 1]
    gt_crop: Rect | None


def expand_box(box: Rect, margin: float, width: float, height: float) -> Rect:
    """Grow ``box`` by ``margin`` times its size on every side, clamped to the image."""
    dx, dy = margin * box.width, margin * box.height
    return Rect(box.x_min - dx, box.y_min - dy, box.x_max + dx, box.y_max + dy).clamp(width, height)


def _object_mask(rng: np.random.Generator, size: int) -> np.ndarray:
    ow = int(rng.integers(int(0.10 * size), int(0.40 * size) + 1))
    oh = int(rng.integers(int(0.10 * size), int(0.40 * size) + 1))
    ow, oh = max(ow, 2), max(oh, 2)
    x0 = int(rng.integers(0, size - ow + 1))
    y0 = int(rng.integers(0, size - oh + 1))
    mask = np.zeros((size, size), dtype=bool)
    if rng.random() < 0.5:
        mask[y0:y0 + oh, x0:x0 + ow] = True
    else:
        yy, xx = np.mgrid[0:size, 0:size]
        cx, cy = x0 + (ow - 1) / 2.0, y0 + (oh - 1) / 2.0
        rx, ry = ow / 2.0, oh / 2.0
        mask = ((xx - cx) / rx) ** 2 + ((yy - cy) / ry) ** 2 <= 1.0
    return mask


def mask_bbox(mask: np.ndarray) -> Rect:
    rows = np.flatnonzero(mask.any(axis=1))
    cols = np.flatnonzero(mask.any(axis=0))
    return Rect(float(cols[0]), float(rows[0]), float(cols[-1] + 1), float(rows[-1] + 1))


def make_sample(index: int, image_size: int, seed: int, channels: int = 3, margin: float = CROP_MARGIN) -> SyntheticSample:
    rng = np.random.default_rng([seed, index])
    size = image_size
    base = rng.uniform(0.05, 0.25, size=channels)
    image = base + rng.normal(0.0, 0.03, size=(size, size, channels))
    saliency = np.zeros((size, size), dtype=bool)
    for _ in range(int(rng.integers(1, 3))):
        mask = _object_mask(rng, size)
        color = rng.uniform(0.65, 1.0, size=channels)
        image[mask] = color
        saliency |= mask
    image = np.round(np.clip(image, 0.0, 1.0) * 255.0) / 255.0
    crop = expand_box(mask_bbox(saliency), margin, size, size)
    return SyntheticSample(f"{index:05d}", image, saliency.astype(np.float64), crop)


def generate_synthetic(count: int, image_size: int, seed: int, channels: int = 3, margin: float = CROP_MARGIN) -> list[SyntheticSample]:
    """Deterministic set of images with 1-2 bright objects on a dark noisy background."""
    if count < 1:
        raise ParameterError(f"count must be >= 1, got {count}")
    if image_size < 10:
        raise ParameterError(f"image_size must be >= 10, got {image_size}")
    return [make_sample(i, image_size, seed, channels, margin) for i in range(count)]


# disk I/O --------------------------------------------------------------------

def _to_uint8(arr: np.ndarray) -> np.ndarray:
    return np.round(np.clip(arr, 0.0, 1.0) * 255.0).astype(np.uint8)


def read_image(path) -> np.ndarray:
    """Read PNG/PGM/JPEG into ``H x W x C`` floats in [0, 1] (grayscale stays ``H x W x 1``)."""
    with PILImage.open(path) as im:
        if im.mode not in ("L", "RGB"):
            im = im.convert("RGB")
        arr = np.asarray(im, dtype=np.float64) / 255.0
    return arr[..., None] if arr.ndim == 2 else arr


def write_image(path, image: np.ndarray) -> None:
    arr = _to_uint8(np.asarray(image))
    if arr.ndim == 3 and arr.shape[2] == 1:
        arr = arr[..., 0]
    PILImage.fromarray(arr).save(path)


def read_saliency(path) -> np.ndarray:
    with PILImage.open(path) as im:
        return np.asarray(im.convert("L"), dtype=np.float64) / 255.0


def write_dataset(samples: list[SyntheticSample], root) -> None:
    root = Path(root)
    (root / "images").mkdir(parents=True, exist_ok=True)
    (root / "saliency").mkdir(parents=True, exist_ok=True)
    for s in samples:
        write_image(root / "images" / f"{s.id}.png", s.image)
        if s.gt_saliency is not None:
            write_image(root / "saliency" / f"{s.id}.png", s.gt_saliency)
    with open(root / "crops.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "x_min", "y_min", "x_max", "y_max"])
        for s in samples:
            if s.gt_crop is not None:
                writer.writerow([s.id] + [repr(v) for v in s.gt_crop.as_list()])


def read_crops(path) -> dict[str, Rect]:
    crops = {}
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if not row or row[0] == "id":
                continue
            crops[row[0]] = Rect.from_array(row[1:5])
    return crops


def load_dataset(root) -> list[SyntheticSample]:
    """Load a dataset directory; samples are sorted by id.

    Missing saliency files or crop rows leave the corresponding field ``None``.
    """
    root = Path(root)
    image_dir = root / "images"
    if not image_dir.is_dir():
        raise FileNotFoundError(f"no images/ directory under {root}")
    crops_path = root / "crops.csv"
    crops = read_crops(crops_path) if crops_path.exists() else {}
    samples = []
    for path in sorted(image_dir.iterdir()):
        if path.suffix.lower() not in (".png", ".pgm", ".jpg", ".jpeg"):
            continue
        sid = path.stem
        sal_path = root / "saliency" / f"{sid}.png"
        saliency = read_saliency(sal_path) if sal_path.exists() else None
        samples.append(SyntheticSample(sid, read_image(path), saliency, crops.get(sid)))
    return samples


def manifest_checksum(root) -> str:
    """SHA-256 over every file of the dataset, in sorted relative-path order."""
    root = Path(root)
    h = hashlib.sha256()
    for path in sorted(p for p in root.rglob("*") if p.is_file()):
        h.update(os.fsencode(path.relative_to(root).as_posix()))
        h.update(b"\0")
        h.update(path.read_bytes())
    return h.hexdigest()
