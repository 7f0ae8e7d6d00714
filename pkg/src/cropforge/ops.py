"""Layer primitives on channel-first, unbatched tensors.

Images and feature maps are ``[C, H, W]``; fully connected inputs are 1-D.
"""
from __future__ import annotations

from typing import Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .autodiff import Tensor
from .errors import ShapeError


def _im2col(x: np.ndarray, k: int) -> np.ndarray:
    # [C, H, W] (already padded) -> [C*k*k, H'*W']
    c = x.shape[0]
    windows = sliding_window_view(x, (k, k), axis=(1, 2))  # C, H', W', k, k
    h_out, w_out = windows.shape[1], windows.shape[2]
    return windows.transpose(0, 3, 4, 1, 2).reshape(c * k * k, h_out * w_out)


def _col2im(cols: np.ndarray, c: int, k: int, h_pad: int, w_pad: int) -> np.ndarray:
    h_out, w_out = h_pad - k + 1, w_pad - k + 1
    cols = cols.reshape(c, k, k, h_out, w_out)
    out = np.zeros((c, h_pad, w_pad))
    for u in range(k):
        for v in range(k):
            out[:, u:u + h_out, v:v + w_out] += cols[:, u, v]
    return out


def conv2d(x: Tensor, weight: Tensor, bias: Tensor, padding: str = "same") -> Tensor:
    """Cross-correlate ``x`` [C_in,H,W] with ``weight`` [C_out,C_in,k,k], add ``bias``."""
    if x.ndim != 3 or weight.ndim != 4:
        raise ShapeError(f"conv2d expects [C,H,W] input and 4-D weights, got {x.shape}, {weight.shape}")
    c_out, c_in, k, k2 = weight.shape
    if k != k2 or k % 2 == 0:
        raise ShapeError(f"conv2d kernel must be square with odd size, got {k}x{k2}")
    if x.shape[0] != c_in:
        raise ShapeError(f"conv2d input has {x.shape[0]} channels, weights expect {c_in}")
    if bias.shape != (c_out,):
        raise ShapeError(f"conv2d bias shape {bias.shape} != ({c_out},)")
    if padding == "same":
        pad = k // 2
    elif padding == "valid":
        pad = 0
        if x.shape[1] < k or x.shape[2] < k:
            raise ShapeError(f"valid conv2d needs spatial dims >= {k}, got {x.shape[1:]}")
    else:
        raise ShapeError(f"unknown padding {padding!r}")

    xp = np.pad(x.data, ((0, 0), (pad, pad), (pad, pad))) if pad else x.data
    h_pad, w_pad = xp.shape[1], xp.shape[2]
    h_out, w_out = h_pad - k + 1, w_pad - k + 1
    cols = _im2col(xp, k)
    w_mat = weight.data.reshape(c_out, -1)
    out = (w_mat @ cols).reshape(c_out, h_out, w_out) + bias.data[:, None, None]

    def backward(g):
        g_mat = g.reshape(c_out, -1)
        gw = (g_mat @ cols.T).reshape(weight.shape) if weight.requires_grad else None
        gb = g_mat.sum(axis=1) if bias.requires_grad else None
        gx = None
        if x.requires_grad:
            gx = _col2im(w_mat.T @ g_mat, c_in, k, h_pad, w_pad)
            if pad:
                gx = gx[:, pad:-pad, pad:-pad]
        return gx, gw, gb

    return Tensor.from_op(out, (x, weight, bias), backward)


def flip_transpose(weight: Tensor) -> Tensor:
    """[C_in,C_out,k,k] transposed-conv kernel -> equivalent [C_out,C_in,k,k] conv kernel."""
    out = weight.data[:, :, ::-1, ::-1].transpose(1, 0, 2, 3)
    return Tensor.from_op(
        out, (weight,), lambda g: (g.transpose(1, 0, 2, 3)[:, :, ::-1, ::-1].copy(),)
    )


def conv_transpose2d(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """Stride-1 transposed convolution with 'same' output size.

    ``weight`` is laid out ``[C_in, C_out, k, k]``. At stride 1 this equals a
    regular convolution with the spatially flipped, channel-swapped kernel.
    """
    if weight.ndim != 4 or x.ndim != 3 or x.shape[0] != weight.shape[0]:
        raise ShapeError(
            f"conv_transpose2d input {x.shape} incompatible with weights {weight.shape}"
        )
    return conv2d(x, flip_transpose(weight), bias, padding="same")


def maxpool2d(x: Tensor, window: int = 2) -> Tensor:
    """Non-overlapping max pooling; ties send the gradient to the first element in row-major order."""
    if x.ndim != 3:
        raise ShapeError(f"maxpool2d expects [C,H,W], got {x.shape}")
    c, h, w = x.shape
    if h % window or w % window:
        raise ShapeError(f"maxpool2d needs spatial dims divisible by {window}, got {h}x{w}")
    ho, wo = h // window, w // window
    blocks = x.data.reshape(c, ho, window, wo, window).transpose(0, 1, 3, 2, 4)
    flat = blocks.reshape(c, ho, wo, window * window)
    arg = flat.argmax(axis=-1)  # argmax returns the first maximal index
    out = np.take_along_axis(flat, arg[..., None], axis=-1)[..., 0]

    def backward(g):
        gflat = np.zeros((c, ho, wo, window * window))
        np.put_along_axis(gflat, arg[..., None], g[..., None], axis=-1)
        gx = gflat.reshape(c, ho, wo, window, window).transpose(0, 1, 3, 2, 4).reshape(c, h, w)
        return (gx,)

    return Tensor.from_op(out, (x,), backward)


def upsample_nearest(x: Tensor, factor: int = 2) -> Tensor:
    if x.ndim != 3:
        raise ShapeError(f"upsample_nearest expects [C,H,W], got {x.shape}")
    c, h, w = x.shape
    out = np.repeat(np.repeat(x.data, factor, axis=1), factor, axis=2)

    def backward(g):
        return (g.reshape(c, h, factor, w, factor).sum(axis=(2, 4)),)

    return Tensor.from_op(out, (x,), backward)


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = list(tensors)
    try:
        out = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError as exc:
        raise ShapeError(f"concat: {exc}") from None
    bounds = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def backward(g):
        return tuple(np.split(g, bounds, axis=axis))

    return Tensor.from_op(out, tensors, backward)


def fully_connected(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """Affine map ``weight @ x + bias`` for 1-D ``x``."""
    if x.ndim != 1 or weight.ndim != 2 or weight.shape[1] != x.shape[0]:
        raise ShapeError(f"fully_connected: input {x.shape} incompatible with weights {weight.shape}")
    if bias.shape != (weight.shape[0],):
        raise ShapeError(f"fully_connected: bias {bias.shape} != ({weight.shape[0]},)")
    xd, wd = x.data, weight.data

    def backward(g):
        gx = wd.T @ g if x.requires_grad else None
        gw = np.outer(g, xd) if weight.requires_grad else None
        return gx, gw, g

    return Tensor.from_op(wd @ xd + bias.data, (x, weight, bias), backward)


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    return Tensor.from_op(np.where(mask, x.data, 0.0), (x,), lambda g: (g * mask,))


def _sigmoid(z: np.ndarray) -> np.ndarray:
    # branch on sign so exp never overflows
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def sigmoid(x: Tensor) -> Tensor:
    s = _sigmoid(x.data)
    return Tensor.from_op(s, (x,), lambda g: (g * s * (1.0 - s),))


def activation(x: Tensor, kind: str) -> Tensor:
    if kind == "relu":
        return relu(x)
    if kind == "sigmoid":
        return sigmoid(x)
    raise ValueError(f"unknown activation {kind!r}")


PROB_CLAMP = 1e-7


def bce_with_logits(logits: Tensor, target) -> Tensor:
    """Pixel-summed binary cross-entropy of ``sigmoid(logits)`` against ``target``.

    The value clamps probabilities to [1e-7, 1-1e-7]; the gradient with respect
    to the logits is the unclamped ``sigmoid(logits) - target`` so saturated
    pixels keep learning.
    """
    t = np.asarray(target.data if isinstance(target, Tensor) else target, dtype=np.float64)
    if t.shape != logits.shape:
        raise ShapeError(f"bce target shape {t.shape} != prediction shape {logits.shape}")
    p = _sigmoid(logits.data)
    pc = np.clip(p, PROB_CLAMP, 1.0 - PROB_CLAMP)
    value = -(t * np.log(pc) + (1.0 - t) * np.log1p(-pc)).sum()
    return Tensor.from_op(np.array(value), (logits,), lambda g: (g * (p - t),))


def squared_error(pred: Tensor, target) -> Tensor:
    """``||pred - target||^2`` as a scalar tensor."""
    t = np.asarray(target, dtype=np.float64)
    if t.shape != pred.shape:
        raise ShapeError(f"squared_error target shape {t.shape} != {pred.shape}")
    diff = pred.data - t
    return Tensor.from_op(np.array(np.dot(diff.ravel(), diff.ravel())), (pred,), lambda g: (2.0 * g * diff,))
