"""Rectangles and the anchor-relative offset encoding of crop windows.

A crop window is described relative to an anchor rectangle by four
coefficients: the top/bottom edge gaps as fractions of the crop height
(``alpha_t``, ``alpha_b``) and the left/right gaps as fractions of the crop
width (``beta_t``, ``beta_b``). Positive values mean the crop extends beyond
the anchor.
"""
from __future__ import annotations

from dataclasses import astuple, dataclass

import numpy as np

from .errors import GeometryError

# decode_rect never divides by less than this (caps growth at 20x the anchor)
MIN_DENOMINATOR = 0.05


@dataclass(frozen=True)
class Rect:
    x_min: float
    y_min: float
    x_max: float
    y_max: float

    def __post_init__(self):
        if not (self.x_min <= self.x_max and self.y_min <= self.y_max):
            raise GeometryError(f"degenerate rectangle ordering: {self}")

    @classmethod
    def from_array(cls, values) -> "Rect":
        x0, y0, x1, y1 = (float(v) for v in values)
        return cls(x0, y0, x1, y1)

    @classmethod
    def full(cls, width: float, height: float) -> "Rect":
        return cls(0.0, 0.0, float(width), float(height))

    @property
    def width(self) -> float:
        return self.x_max - self.x_min

    @property
    def height(self) -> float:
        return self.y_max - self.y_min

    @property
    def area(self) -> float:
        return self.width * self.height

    @property
    def center(self) -> tuple[float, float]:
        return (0.5 * (self.x_min + self.x_max), 0.5 * (self.y_min + self.y_max))

    def as_array(self) -> np.ndarray:
        return np.array(astuple(self), dtype=np.float64)

    def as_list(self) -> list[float]:
        return [float(v) for v in astuple(self)]

    def scale(self, sx: float, sy: float | None = None) -> "Rect":
        sy = sx if sy is None else sy
        return Rect(self.x_min * sx, self.y_min * sy, self.x_max * sx, self.y_max * sy)

    def translate(self, dx: float, dy: float) -> "Rect":
        return Rect(self.x_min + dx, self.y_min + dy, self.x_max + dx, self.y_max + dy)

    def clamp(self, width: float, height: float) -> "Rect":
        width, height = float(width), float(height)
        x0 = min(max(self.x_min, 0.0), width)
        x1 = min(max(self.x_max, 0.0), width)
        y0 = min(max(self.y_min, 0.0), height)
        y1 = min(max(self.y_max, 0.0), height)
        return Rect(x0, y0, x1, y1)

    def with_min_size(self, min_side: float, width: float, height: float) -> "Rect":
        """Grow a too-thin rectangle about its center, keeping it inside the image."""
        x0, y0, x1, y1 = astuple(self)
        cx, cy = self.center
        if x1 - x0 < min_side:
            x0 = min(max(cx - min_side / 2, 0.0), width - min_side)
            x1 = x0 + min_side
        if y1 - y0 < min_side:
            y0 = min(max(cy - min_side / 2, 0.0), height - min_side)
            y1 = y0 + min_side
        return Rect(x0, y0, x1, y1)

    def contains(self, other: "Rect", tol: float = 0.0) -> bool:
        return (
            self.x_min - tol <= other.x_min
            and self.y_min - tol <= other.y_min
            and other.x_max <= self.x_max + tol
            and other.y_max <= self.y_max + tol
        )


@dataclass(frozen=True)
class OffsetCoefficients:
    alpha_t: float
    alpha_b: float
    beta_t: float
    beta_b: float

    @classmethod
    def zeros(cls) -> "OffsetCoefficients":
        return cls(0.0, 0.0, 0.0, 0.0)

    @classmethod
    def from_array(cls, values) -> "OffsetCoefficients":
        a_t, a_b, b_t, b_b = (float(v) for v in values)
        return cls(a_t, a_b, b_t, b_b)

    def as_array(self) -> np.ndarray:
        return np.array(astuple(self), dtype=np.float64)

    @property
    def decodable(self) -> bool:
        return self.alpha_t + self.alpha_b < 1.0 and self.beta_t + self.beta_b < 1.0


def encode_offsets(anchor: Rect, aesthetic: Rect) -> OffsetCoefficients:
    """Offsets of ``aesthetic`` relative to ``anchor``, normalized by the aesthetic size."""
    h_a, w_a = aesthetic.height, aesthetic.width
    if h_a <= 0 or w_a <= 0:
        raise GeometryError(f"aesthetic rectangle must have positive area, got {aesthetic}")
    dy_t = anchor.y_min - aesthetic.y_min
    dy_b = aesthetic.y_max - anchor.y_max
    dx_t = anchor.x_min - aesthetic.x_min
    dx_b = aesthetic.x_max - anchor.x_max
    return OffsetCoefficients(dy_t / h_a, dy_b / h_a, dx_t / w_a, dx_b / w_a)


def decode_rect(anchor: Rect, coeffs: OffsetCoefficients, image_bounds: Rect | None = None) -> Rect:
    """Invert :func:`encode_offsets`; optionally clamp the result to ``image_bounds``."""
    h_s, w_s = anchor.height, anchor.width
    if h_s <= 0 or w_s <= 0:
        raise GeometryError(f"anchor must have positive area, got {anchor}")
    h_a = h_s / max(1.0 - coeffs.alpha_t - coeffs.alpha_b, MIN_DENOMINATOR)
    w_a = w_s / max(1.0 - coeffs.beta_t - coeffs.beta_b, MIN_DENOMINATOR)
    x0 = anchor.x_min - coeffs.beta_t * w_a
    y0 = anchor.y_min - coeffs.alpha_t * h_a
    x1 = anchor.x_max + coeffs.beta_b * w_a
    y1 = anchor.y_max + coeffs.alpha_b * h_a
    rect = Rect(x0, y0, x1, y1)
    if image_bounds is not None:
        rect = Rect(
            min(max(rect.x_min, image_bounds.x_min), image_bounds.x_max),
            min(max(rect.y_min, image_bounds.y_min), image_bounds.y_max),
            min(max(rect.x_max, image_bounds.x_min), image_bounds.x_max),
            min(max(rect.y_max, image_bounds.y_min), image_bounds.y_max),
        )
    return rect


def ground_truth_offsets(saliency, image_w: int, image_h: int, gamma: float = 3.0) -> OffsetCoefficients:
    """Regression target for a high-quality image: the whole frame relative to its anchor."""
    from .crop_layers import anchor_region

    return encode_offsets(anchor_region(saliency, gamma), Rect.full(image_w, image_h))
