"""Training losses and crop evaluation metrics."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ParameterError, ShapeError
from .geometry import OffsetCoefficients, Rect
from .ops import PROB_CLAMP


@dataclass(frozen=True)
class LossReport:
    saliency_loss: float
    offset_loss: float
    total: float
    lam: float = 1.0


def bce_loss(predicted, target) -> float:
    """Pixel-summed binary cross-entropy between a probability map and a target map."""
    p = np.asarray(predicted, dtype=np.float64)
    t = np.asarray(target, dtype=np.float64)
    if p.shape != t.shape:
        raise ShapeError(f"bce_loss shape mismatch: {p.shape} vs {t.shape}")
    p = np.clip(p, PROB_CLAMP, 1.0 - PROB_CLAMP)
    return float(-(t * np.log(p) + (1.0 - t) * np.log1p(-p)).sum())


def _coeff_array(value) -> np.ndarray:
    if isinstance(value, OffsetCoefficients):
        return value.as_array()
    arr = np.asarray(value, dtype=np.float64).reshape(-1)
    if arr.shape != (4,):
        raise ShapeError(f"expected 4 offset coefficients, got shape {arr.shape}")
    return arr


def offset_l2_loss(predicted, target) -> float:
    diff = _coeff_array(predicted) - _coeff_array(target)
    return float(np.dot(diff, diff))


def total_loss(s_loss: float, r_loss: float, lam: float = 1.0) -> LossReport:
    if not lam >= 0:
        raise ParameterError(f"loss weight must be non-negative, got {lam}")
    return LossReport(float(s_loss), float(r_loss), float(s_loss + lam * r_loss), float(lam))


def iou(a: Rect, b: Rect) -> float:
    iw = min(a.x_max, b.x_max) - max(a.x_min, b.x_min)
    ih = min(a.y_max, b.y_max) - max(a.y_min, b.y_min)
    inter = max(iw, 0.0) * max(ih, 0.0)
    union = a.area + b.area - inter
    if union <= 0:
        return 0.0
    return inter / union


def bde(a: Rect, b: Rect, image_w: float, image_h: float) -> float:
    """Mean absolute displacement of the four edges, normalized per axis."""
    if not (image_w > 0 and image_h > 0):
        raise ParameterError(f"image dims must be positive, got {image_w}x{image_h}")
    return (
        abs(a.x_min - b.x_min) / image_w
        + abs(a.x_max - b.x_max) / image_w
        + abs(a.y_min - b.y_min) / image_h
        + abs(a.y_max - b.y_max) / image_h
    ) / 4.0
