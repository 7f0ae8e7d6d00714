"""U-shaped encoder-decoder producing a same-size saliency map."""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass

import numpy as np
from PIL import Image as PILImage

from .autodiff import Tensor
from .errors import ParameterError, ShapeError
from .ops import concat, conv2d, conv_transpose2d, maxpool2d, relu, sigmoid, upsample_nearest
from .params import SALIENCY, ModelParams, glorot_uniform

# incremented once per call; used to verify single-pass inference
forward_calls: Counter = Counter()


@dataclass(frozen=True)
class UNetConfig:
    depth: int = 3
    base_channels: int = 8
    input_channels: int = 3
    kernel_size: int = 3
    seed: int = 0

    def __post_init__(self):
        if self.depth < 1:
            raise ParameterError(f"depth must be >= 1, got {self.depth}")
        if self.base_channels < 1:
            raise ParameterError(f"base_channels must be >= 1, got {self.base_channels}")
        if self.input_channels not in (1, 3):
            raise ParameterError(f"input_channels must be 1 or 3, got {self.input_channels}")
        if self.kernel_size < 1 or self.kernel_size % 2 == 0:
            raise ParameterError(f"kernel_size must be odd, got {self.kernel_size}")

    @property
    def stride(self) -> int:
        return 2 ** self.depth

    def channels(self, level: int) -> int:
        return self.base_channels * 2 ** level

    @property
    def bottleneck_channels(self) -> int:
        return self.channels(self.depth)

    @classmethod
    def from_params(cls, params: ModelParams) -> "UNetConfig":
        """Recover the architecture from parameter names and shapes."""
        depth = 0
        while f"sal.enc{depth}.conv1.w" in params:
            depth += 1
        if depth == 0:
            raise ParameterError("parameters contain no U-net encoder")
        w = params["sal.enc0.conv1.w"].shape
        return cls(depth=depth, base_channels=w[0], input_channels=w[1], kernel_size=w[2])


@dataclass
class SaliencyOutput:
    logits: Tensor  # [H, W]
    map: Tensor  # [H, W], sigmoid of logits
    bottleneck: Tensor  # [C_b, H / 2^depth, W / 2^depth]


def _add_conv(params, rng, name, c_in, c_out, k, transposed=False):
    fan_in, fan_out = c_in * k * k, c_out * k * k
    shape = (c_in, c_out, k, k) if transposed else (c_out, c_in, k, k)
    params.add(f"{name}.w", glorot_uniform(rng, shape, fan_in, fan_out), SALIENCY)
    params.add(f"{name}.b", np.zeros(c_out), SALIENCY)


def build_unet(config: UNetConfig) -> ModelParams:
    rng = np.random.default_rng(config.seed)
    params = ModelParams()
    k = config.kernel_size
    c_prev = config.input_channels
    for level in range(config.depth):
        c = config.channels(level)
        _add_conv(params, rng, f"sal.enc{level}.conv1", c_prev, c, k)
        _add_conv(params, rng, f"sal.enc{level}.conv2", c, c, k)
        c_prev = c
    c_mid = config.bottleneck_channels
    _add_conv(params, rng, "sal.mid.conv1", c_prev, c_mid, k)
    _add_conv(params, rng, "sal.mid.conv2", c_mid, c_mid, k)
    c_prev = c_mid
    for level in reversed(range(config.depth)):
        c = config.channels(level)
        _add_conv(params, rng, f"sal.dec{level}.deconv1", c_prev + c, c, k, transposed=True)
        _add_conv(params, rng, f"sal.dec{level}.deconv2", c, c, k, transposed=True)
        c_prev = c
    _add_conv(params, rng, "sal.out", c_prev, 1, 1)
    return params


def image_to_chw(image) -> np.ndarray:
    arr = np.asarray(image, dtype=np.float64)
    if arr.ndim == 2:
        return arr[None]
    if arr.ndim == 3:
        return np.ascontiguousarray(arr.transpose(2, 0, 1))
    raise ShapeError(f"image must be HxW or HxWxC, got shape {arr.shape}")


def forward_saliency(params: ModelParams, image, config: UNetConfig | None = None) -> SaliencyOutput:
    """Run the U-net on an ``H x W x C`` image (values in [0, 1]) or a ``[C,H,W]`` tensor."""
    config = config or UNetConfig.from_params(params)
    x = image if isinstance(image, Tensor) else Tensor(image_to_chw(image))
    if x.ndim != 3 or x.shape[0] != config.input_channels:
        raise ShapeError(
            f"expected a {config.input_channels}-channel image, got tensor shape {x.shape}"
        )
    h, w = x.shape[1:]
    if h % config.stride or w % config.stride:
        raise ShapeError(
            f"image size {h}x{w} is not divisible by {config.stride}; resize it first "
            "(see resize_shorter_side)"
        )
    forward_calls["saliency"] += 1

    def conv(name, t):
        return relu(conv2d(t, params[f"{name}.w"], params[f"{name}.b"], padding="same"))

    def deconv(name, t):
        return relu(conv_transpose2d(t, params[f"{name}.w"], params[f"{name}.b"]))

    skips = []
    for level in range(config.depth):
        x = conv(f"sal.enc{level}.conv2", conv(f"sal.enc{level}.conv1", x))
        skips.append(x)
        x = maxpool2d(x, 2)
    x = conv("sal.mid.conv2", conv("sal.mid.conv1", x))
    bottleneck = x
    for level in reversed(range(config.depth)):
        x = concat([upsample_nearest(x, 2), skips[level]], axis=0)
        x = deconv(f"sal.dec{level}.deconv2", deconv(f"sal.dec{level}.deconv1", x))
    logits = conv2d(x, params["sal.out.w"], params["sal.out.b"], padding="same").reshape(h, w)
    return SaliencyOutput(logits=logits, map=sigmoid(logits), bottleneck=bottleneck)


def resized_shape(height: int, width: int, target: int, multiple: int = 1) -> tuple[int, int]:
    if height <= 0 or width <= 0:
        raise ShapeError(f"cannot resize a degenerate {height}x{width} image")
    if target < multiple or target < 1:
        raise ParameterError(f"target side {target} must be at least {multiple}")
    if height <= width:
        new_h, new_w = target, width * target // height
    else:
        new_h, new_w = height * target // width, target
    return new_h - new_h % multiple, new_w - new_w % multiple


def resize_shorter_side(image, target: int, multiple: int = 1):
    """Bilinear, aspect-preserving resize so the shorter side equals ``target``.

    Both sides are then floored to a multiple of ``multiple`` (the U-net
    stride). Returns ``(resized, (scale_x, scale_y))`` where each scale is
    new size over old size along that axis.
    """
    arr = np.asarray(image, dtype=np.float64)
    if arr.ndim not in (2, 3) or 0 in arr.shape:
        raise ShapeError(f"cannot resize image of shape {arr.shape}")
    h, w = arr.shape[:2]
    new_h, new_w = resized_shape(h, w, target, multiple)
    scale = (new_w / w, new_h / h)
    if (new_h, new_w) == (h, w):
        return arr.copy(), scale
    planes = arr[..., None] if arr.ndim == 2 else arr
    out = np.empty((new_h, new_w, planes.shape[2]))
    for ch in range(planes.shape[2]):
        plane = PILImage.fromarray(np.ascontiguousarray(planes[..., ch], dtype=np.float32))
        out[..., ch] = np.asarray(plane.resize((new_w, new_h), PILImage.BILINEAR), dtype=np.float64)
    return (out[..., 0] if arr.ndim == 2 else out), scale
