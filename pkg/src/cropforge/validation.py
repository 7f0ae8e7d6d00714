"""Input checks shared by the estimator and the CLI."""
from __future__ import annotations

import numpy as np

from .errors import ShapeError
from .geometry import Rect


def check_image(image, channels: int | None = None) -> np.ndarray:
    """Return ``image`` as a finite ``H x W x C`` float array in [0, 1]."""
    arr = np.asarray(image, dtype=np.float64)
    if arr.ndim == 2:
        arr = arr[..., None]
    if arr.ndim != 3 or arr.shape[0] == 0 or arr.shape[1] == 0:
        raise ShapeError(f"expected an HxW or HxWxC image, got shape {arr.shape}")
    if channels is not None and arr.shape[2] != channels:
        raise ShapeError(f"expected {channels} channel(s), got {arr.shape[2]}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("image contains NaN or infinite values")
    if arr.min() < 0.0 or arr.max() > 1.0:
        raise ValueError("image values must be normalized to [0, 1]")
    return arr


def check_images(images, channels: int | None = None) -> list[np.ndarray]:
    if isinstance(images, np.ndarray) and images.ndim in (3, 4) and images.dtype != object:
        images = list(images)
    images = [check_image(im, channels) for im in images]
    if not images:
        raise ValueError("need at least one image")
    first = images[0].shape[2]
    if any(im.shape[2] != first for im in images):
        raise ShapeError("all images must have the same number of channels")
    return images


def check_saliency_map(saliency, shape: tuple[int, int]) -> np.ndarray:
    arr = np.asarray(saliency, dtype=np.float64)
    if arr.ndim == 3 and arr.shape[2] == 1:
        arr = arr[..., 0]
    if arr.shape != tuple(shape):
        raise ShapeError(f"saliency map shape {arr.shape} does not match image {tuple(shape)}")
    if not np.all(np.isfinite(arr)) or arr.min() < 0.0 or arr.max() > 1.0:
        raise ValueError("saliency values must be finite and lie in [0, 1]")
    return arr


def check_rects(rects, n: int | None = None) -> list[Rect]:
    """Accept Rect objects or an ``(n, 4)`` array of ``x_min, y_min, x_max, y_max``."""
    out = [r if isinstance(r, Rect) else Rect.from_array(np.asarray(r, dtype=np.float64).reshape(4)) for r in rects]
    if n is not None and len(out) != n:
        raise ShapeError(f"expected {n} rectangles, got {len(out)}")
    return out
