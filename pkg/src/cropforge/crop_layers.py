"""Differentiable layers between the saliency map and the regression head.

Saliency maps are ``[H, W]`` arrays indexed ``S[j, i]`` where ``i`` is the
column (x) and ``j`` the row (y), both zero-based.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .autodiff import Tensor
from .errors import ParameterError, ShapeError
from .geometry import Rect

DEFAULT_SIGMA = 0.01
DEFAULT_GAMMA = 3.0
FALLBACK_FRACTION = 0.70
# maps whose total mass is below this fraction of the pixel count use the fallback
ACTIVATION_THRESHOLD = 1e-3
SIGMA_FLOOR = 1e-6


def _check_map(values) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim == 3 and arr.shape[0] == 1:
        arr = arr[0]
    if arr.ndim != 2:
        raise ShapeError(f"saliency map must be 2-D, got shape {arr.shape}")
    return arr


# soft binarization -----------------------------------------------------------

def soft_binarize(x, sigma: float = DEFAULT_SIGMA):
    """Elementwise ``x^2 / (x^2 + sigma^2)``.

    Accepts an array or a :class:`Tensor`; a tensor input returns a tensor
    whose backward uses ``2 x sigma^2 / (x^2 + sigma^2)^2``.
    """
    if not sigma > 0:
        raise ParameterError(f"sigma must be positive, got {sigma}")
    s2 = sigma * sigma
    if not isinstance(x, Tensor):
        v = np.asarray(x, dtype=np.float64)
        return v * v / (v * v + s2)
    v = x.data
    denom = v * v + s2
    out = v * v / denom
    return Tensor.from_op(out, (x,), lambda g: (g * 2.0 * v * s2 / (denom * denom),))


# moments ---------------------------------------------------------------------

@dataclass(frozen=True)
class Moments:
    m00: float
    m10: float
    m01: float
    m20: float
    m02: float

    @property
    def cx(self) -> float:
        return self.m10 / self.m00

    @property
    def cy(self) -> float:
        return self.m01 / self.m00

    @property
    def sigma_x(self) -> float:
        return math.sqrt(max(self.m20 / self.m00 - self.cx * self.cx, 0.0))

    @property
    def sigma_y(self) -> float:
        return math.sqrt(max(self.m02 / self.m00 - self.cy * self.cy, 0.0))


def compute_moments(saliency) -> Moments:
    """Raw moments up to second order.

    Sums are exactly rounded (``math.fsum``) so the result does not depend
    on summation order.
    """
    s = _check_map(saliency)
    h, w = s.shape
    xs = np.arange(w, dtype=np.float64)[None, :]
    ys = np.arange(h, dtype=np.float64)[:, None]
    return Moments(
        m00=math.fsum(s.ravel()),
        m10=math.fsum((xs * s).ravel()),
        m01=math.fsum((ys * s).ravel()),
        m20=math.fsum(((xs * xs) * s).ravel()),
        m02=math.fsum(((ys * ys) * s).ravel()),
    )


# anchor region -----------------------------------------------------------------

def fallback_rect(width: float, height: float, fraction: float = FALLBACK_FRACTION) -> Rect:
    """Centered rectangle whose area is ``fraction`` of the image."""
    side = math.sqrt(fraction)
    w, h = width * side, height * side
    x0, y0 = (width - w) / 2.0, (height - h) / 2.0
    return Rect(x0, y0, x0 + w, y0 + h)


def uses_fallback(m: Moments, width: int, height: int) -> bool:
    return not m.m00 >= ACTIVATION_THRESHOLD * width * height


def anchor_corners(m: Moments, gamma: float = DEFAULT_GAMMA) -> np.ndarray:
    """Unclamped ``(x_min, y_min, x_max, y_max)`` of the centroid +- gamma*std window."""
    cx, cy, sx, sy = m.cx, m.cy, m.sigma_x, m.sigma_y
    return np.array([cx - gamma * sx, cy - gamma * sy, cx + gamma * sx, cy + gamma * sy])


def anchor_region(
    saliency,
    gamma: float = DEFAULT_GAMMA,
    fallback_fraction: float = FALLBACK_FRACTION,
) -> Rect:
    if not gamma > 0:
        raise ParameterError(f"gamma must be positive, got {gamma}")
    s = _check_map(saliency)
    h, w = s.shape
    m = compute_moments(s)
    if uses_fallback(m, w, h):
        return fallback_rect(w, h, fallback_fraction)
    return Rect.from_array(anchor_corners(m, gamma)).clamp(w, h)


def _centroid_grad(coord: np.ndarray, m00: float, m1: float) -> np.ndarray:
    # d(m1/m00)/dS = coord/m00 - m1/m00^2
    return coord / m00 - m1 / (m00 * m00)


def _std_grad(coord: np.ndarray, m00: float, m2: float, c: float, sigma: float, dc: np.ndarray) -> np.ndarray:
    if sigma < SIGMA_FLOOR:
        return np.zeros_like(dc)
    return (coord * coord / m00 - m2 / (m00 * m00) - 2.0 * c * dc) / (2.0 * sigma)


def anchor_backward(
    saliency,
    upstream,
    gamma: float = DEFAULT_GAMMA,
    clamp: bool = True,
) -> np.ndarray:
    """Gradient on the map given the gradient on ``(x_min, y_min, x_max, y_max)``.

    Corners that were clamped to the image border receive no gradient when
    ``clamp`` is true.
    """
    s = _check_map(saliency)
    h, w = s.shape
    up = np.asarray(upstream, dtype=np.float64).reshape(4)
    m = compute_moments(s)
    if not m.m00 > 0:
        raise ParameterError("anchor_backward needs a map with positive mass")
    xs = np.arange(w, dtype=np.float64)
    ys = np.arange(h, dtype=np.float64)
    cx, cy = m.cx, m.cy
    dcx = _centroid_grad(xs, m.m00, m.m10)
    dcy = _centroid_grad(ys, m.m00, m.m01)
    dsx = _std_grad(xs, m.m00, m.m20, cx, m.sigma_x, dcx)
    dsy = _std_grad(ys, m.m00, m.m02, cy, m.sigma_y, dcy)

    up = up.copy()
    if clamp:
        raw = anchor_corners(m, gamma)
        limits = np.array([w, h, w, h], dtype=np.float64)
        up[(raw < 0) | (raw > limits)] = 0.0

    gx = up[0] * (dcx - gamma * dsx) + up[2] * (dcx + gamma * dsx)  # per column
    gy = up[1] * (dcy - gamma * dsy) + up[3] * (dcy + gamma * dsy)  # per row
    return gy[:, None] + gx[None, :]


def anchor_layer(
    saliency: Tensor,
    gamma: float = DEFAULT_GAMMA,
    fallback_fraction: float = FALLBACK_FRACTION,
    clamp: bool = True,
) -> Tensor:
    """Differentiable anchor: ``[H, W]`` map -> ``[4]`` corners.

    With ``clamp=False`` the raw window corners are returned (no clamping, no
    fallback), which is the form used for gradient checking.
    """
    s = _check_map(saliency.data)
    h, w = s.shape
    m = compute_moments(s)
    shape = saliency.shape
    if clamp and uses_fallback(m, w, h):
        rect = fallback_rect(w, h, fallback_fraction)
        return Tensor.from_op(rect.as_array(), (saliency,), lambda g: (np.zeros(shape),))
    raw = anchor_corners(m, gamma)
    out = np.clip(raw, 0.0, np.array([w, h, w, h], dtype=np.float64)) if clamp else raw

    def backward(g):
        return (anchor_backward(s, g, gamma, clamp=clamp).reshape(shape),)

    return Tensor.from_op(out, (saliency,), backward)


# RoI pooling -------------------------------------------------------------------

def _axis_bins(lo: float, hi: float, size: int, grid: int) -> list[tuple[int, int]]:
    lo = min(max(lo, 0.0), float(size))
    hi = min(max(hi, 0.0), float(size))
    if math.ceil(hi) <= math.floor(lo) or hi <= lo:
        cell = min(max(int(math.floor(lo)), 0), size - 1)
        lo, hi = float(cell), float(cell + 1)
    step = (hi - lo) / grid
    bins = []
    for k in range(grid):
        start = int(math.floor(lo + k * step))
        end = int(math.ceil(lo + (k + 1) * step))
        start = min(max(start, 0), size - 1)
        end = min(max(end, start + 1), size)
        bins.append((start, end))
    return bins


def roi_bins(region: Rect, stride: int, height: int, width: int, grid: int):
    """Integer ``(rows, cols)`` cell bounds of ``region`` on a feature map of the given size."""
    if grid < 1:
        raise ParameterError(f"grid must be >= 1, got {grid}")
    if stride < 1:
        raise ParameterError(f"stride must be >= 1, got {stride}")
    rows = _axis_bins(region.y_min / stride, region.y_max / stride, height, grid)
    cols = _axis_bins(region.x_min / stride, region.x_max / stride, width, grid)
    return rows, cols


def roi_pool(features: Tensor, region: Rect, stride: int, grid: int) -> Tensor:
    """Max-pool ``features`` [C,h,w] inside ``region`` (image coordinates) onto a grid.

    The region is a constant input: gradients reach the features only.
    """
    if features.ndim != 3:
        raise ShapeError(f"roi_pool expects [C,h,w] features, got {features.shape}")
    c, h, w = features.shape
    rows, cols = roi_bins(region, stride, h, w, grid)
    data = features.data
    out = np.empty((c, grid, grid))
    arg_y = np.empty((c, grid, grid), dtype=np.intp)
    arg_x = np.empty((c, grid, grid), dtype=np.intp)
    for gy, (y0, y1) in enumerate(rows):
        for gx, (x0, x1) in enumerate(cols):
            patch = data[:, y0:y1, x0:x1].reshape(c, -1)
            idx = patch.argmax(axis=1)
            out[:, gy, gx] = patch[np.arange(c), idx]
            pw = x1 - x0
            arg_y[:, gy, gx] = y0 + idx // pw
            arg_x[:, gy, gx] = x0 + idx % pw

    def backward(g):
        gf = np.zeros((c, h, w))
        ch = np.broadcast_to(np.arange(c)[:, None, None], g.shape)
        np.add.at(gf, (ch, arg_y, arg_x), g)
        return (gf,)

    return Tensor.from_op(out, (features,), backward)
