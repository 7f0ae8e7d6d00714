"""Central finite-difference verification of analytical gradients."""
from __future__ import annotations

from typing import Callable

import numpy as np

from .autodiff import Tensor
from .errors import NumericError, ParameterError

ABS_FLOOR = 1e-8
# entries smaller than this fraction of the largest gradient entry are compared
# against that scale instead of their own (near-cancelling) magnitude
SCALE_FLOOR = 1e-4


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    if not analytic.size:
        return 0.0
    mag = np.maximum(np.abs(analytic), np.abs(numeric))
    floor = max(ABS_FLOOR, SCALE_FLOOR * float(mag.max()))
    return float(np.max(np.abs(analytic - numeric) / np.maximum(mag, floor)))


def gradient_check(
    op: Callable[[Tensor], Tensor],
    x,
    epsilon: float = 1e-5,
    seed: int = 0,
) -> float:
    """Worst elementwise relative error between backprop and central differences.

    A non-scalar output is reduced with fixed random weights so every output
    element contributes to the checked scalar.
    """
    if not 1e-7 <= epsilon <= 1e-3:
        raise ParameterError(f"epsilon must lie in [1e-7, 1e-3], got {epsilon}")
    base = np.array(x.data if isinstance(x, Tensor) else x, dtype=np.float64)
    rng = np.random.default_rng(seed)

    probe = op(Tensor(base))
    weights = rng.uniform(0.5, 1.5, size=probe.shape) * rng.choice([-1.0, 1.0], size=probe.shape)

    def scalar(values: np.ndarray) -> float:
        out = op(Tensor(values)).data
        if not np.all(np.isfinite(out)):
            raise NumericError("op produced non-finite output during gradient check")
        return float(np.sum(out * weights))

    leaf = Tensor(base.copy(), requires_grad=True)
    out = op(leaf)
    if not np.all(np.isfinite(out.data)):
        raise NumericError("op produced non-finite output during gradient check")
    out.backward(weights)
    analytic = np.zeros_like(base) if leaf.grad is None else leaf.grad
    if not np.all(np.isfinite(analytic)):
        raise NumericError("non-finite analytical gradient")

    numeric = np.zeros_like(base)
    flat = base.reshape(-1)
    num_flat = numeric.reshape(-1)
    for k in range(flat.size):
        orig = flat[k]
        flat[k] = orig + epsilon
        f_plus = scalar(base)
        flat[k] = orig - epsilon
        f_minus = scalar(base)
        flat[k] = orig
        num_flat[k] = (f_plus - f_minus) / (2.0 * epsilon)
    return relative_error(analytic, numeric)


# per-layer suite ---------------------------------------------------------------

TOLERANCE = 1e-4


def _uniform(rng, shape):
    return rng.uniform(0.1, 0.9, size=shape)


def _signed(rng, shape):
    return _uniform(rng, shape) * rng.choice([-1.0, 1.0], size=shape)


def _layer_cases(rng: np.random.Generator):
    """Yield ``(row, op, input)`` triples for one random draw."""
    from . import crop_layers, ops
    from .geometry import Rect

    sigma = float(rng.choice([0.01, 0.1]))
    yield "soft_binarize", lambda t: crop_layers.soft_binarize(t, sigma), _uniform(rng, (8, 8))
    yield "anchor_region", lambda t: crop_layers.anchor_layer(t, 3.0, clamp=False), _uniform(rng, (16, 16))

    w = _signed(rng, (3, 2, 3, 3))
    b = _signed(rng, (3,))
    x = _uniform(rng, (2, 6, 6))
    yield "conv2d", lambda t: ops.conv2d(t, Tensor(w), Tensor(b)), x
    yield "conv2d", lambda t: ops.conv2d(Tensor(x), t, Tensor(b), padding="valid"), w
    yield "conv2d", lambda t: ops.conv2d(Tensor(x), Tensor(w), t), b

    wt = _signed(rng, (2, 3, 3, 3))
    yield "conv_transpose2d", lambda t: ops.conv_transpose2d(t, Tensor(wt), Tensor(b)), x
    yield "conv_transpose2d", lambda t: ops.conv_transpose2d(Tensor(x), t, Tensor(b)), wt

    yield "maxpool", lambda t: ops.maxpool2d(t, 2), _uniform(rng, (2, 6, 6))
    yield "upsample", lambda t: ops.upsample_nearest(t, 2), _uniform(rng, (2, 3, 3))
    other = Tensor(_uniform(rng, (1, 3, 3)))
    yield "concat", lambda t: ops.concat([t, other], axis=0), _uniform(rng, (2, 3, 3))

    fw = _signed(rng, (4, 5))
    fb = _signed(rng, (4,))
    fx = _uniform(rng, (5,))
    yield "fc", lambda t: ops.fully_connected(t, Tensor(fw), Tensor(fb)), fx
    yield "fc", lambda t: ops.fully_connected(Tensor(fx), t, Tensor(fb)), fw
    yield "fc", lambda t: ops.fully_connected(Tensor(fx), Tensor(fw), t), fb

    yield "sigmoid", ops.sigmoid, _signed(rng, (10,)) * 4.0
    yield "relu", ops.relu, _signed(rng, (10,))

    region = Rect(*(rng.uniform(0, 20, 2)), *(rng.uniform(28, 48, 2)))
    yield "roi_pool", lambda t: crop_layers.roi_pool(t, region, 8, 2), _uniform(rng, (2, 6, 6))

    target = (rng.random((4, 4)) > 0.5).astype(float)
    yield "bce", lambda t: ops.bce_with_logits(t, target), _signed(rng, (4, 4)) * 3.0
    goal = _signed(rng, (4,))
    yield "offset_l2", lambda t: ops.squared_error(t, goal), _signed(rng, (4,))


def run_suite(seed: int = 0, trials: int = 10, epsilon: float = 1e-5) -> dict[str, float]:
    """Worst relative error per layer over ``trials`` seeded random draws."""
    worst: dict[str, float] = {}
    for trial in range(trials):
        rng = np.random.default_rng([seed, trial])
        for row, op, x in _layer_cases(rng):
            err = gradient_check(op, x, epsilon, seed=seed + trial)
            worst[row] = max(worst.get(row, 0.0), err)
    return worst
