import numpy as np
import pytest

from cropforge import ops
from cropforge.autodiff import Tensor
from cropforge.errors import ShapeError
from cropforge.unet import UNetConfig, build_unet, forward_saliency, resize_shorter_side, resized_shape


def conv_names(params):
    return sorted({n.rsplit(".", 1)[0] for n in params.names()})


def test_depth_one_census():
    params = build_unet(UNetConfig(depth=1, base_channels=1, input_channels=1))
    layers = conv_names(params)
    assert len(layers) == 7
    assert sum(".enc" in n for n in layers) == 2
    assert sum(".mid" in n for n in layers) == 2
    assert sum(".dec" in n for n in layers) == 2


def test_four_level_network_builds():
    cfg = UNetConfig(depth=4, base_channels=2, input_channels=3)
    out = forward_saliency(build_unet(cfg), np.random.default_rng(0).random((16, 16, 3)), cfg)
    assert out.map.shape == (16, 16)


def test_decoder_input_is_upsampled_plus_skip():
    cfg = UNetConfig(depth=2, base_channels=4, input_channels=3)
    params = build_unet(cfg)
    for level in range(cfg.depth):
        w = params[f"sal.dec{level}.deconv1.w"].data  # [C_in, C_out, k, k]
        below = cfg.bottleneck_channels if level == cfg.depth - 1 else cfg.channels(level + 1)
        assert w.shape[0] == below + cfg.channels(level)


def test_output_shape_and_range():
    cfg = UNetConfig(depth=3, base_channels=4)
    out = forward_saliency(build_unet(cfg), np.random.default_rng(1).random((64, 64, 3)), cfg)
    assert out.map.shape == (64, 64)
    assert np.all((out.map.data > 0) & (out.map.data < 1))
    assert out.bottleneck.shape[1:] == (8, 8)


def test_indivisible_input_rejected():
    cfg = UNetConfig(depth=3, base_channels=2)
    with pytest.raises(ShapeError):
        forward_saliency(build_unet(cfg), np.zeros((60, 64, 3)), cfg)


def test_gradient_reaches_every_parameter():
    cfg = UNetConfig(depth=2, base_channels=2)
    params = build_unet(cfg)
    rng = np.random.default_rng(2)
    out = forward_saliency(params, rng.random((8, 8, 3)), cfg)
    ops.bce_with_logits(out.logits, (rng.random((8, 8)) > 0.5).astype(float)).backward()
    for name, t in params.items():
        assert t.grad is not None and np.any(t.grad != 0), name


class TestResize:
    def test_halving(self):
        img, scale = resize_shorter_side(np.random.default_rng(0).random((448, 448, 3)), 224)
        assert img.shape == (224, 224, 3) and scale == (0.5, 0.5)

    def test_identity(self):
        src = np.random.default_rng(0).random((224, 224, 3))
        img, scale = resize_shorter_side(src, 224)
        assert img is src or np.array_equal(img, src)
        assert scale == (1.0, 1.0)

    def test_longer_side_rounded_to_stride(self):
        assert resized_shape(300, 500, 224, 8) == (224, 368)
        assert resized_shape(500, 300, 224, 8) == (368, 224)


def test_resize_is_idempotent():
    once, _ = resize_shorter_side(np.random.default_rng(3).random((90, 150, 3)), 64, 8)
    twice, scale = resize_shorter_side(once, 64, 8)
    assert np.array_equal(once, twice) and scale == (1.0, 1.0)


def test_forward_is_deterministic():
    cfg = UNetConfig(depth=2, base_channels=2)
    img = np.random.default_rng(4).random((16, 16, 3))
    a = forward_saliency(build_unet(cfg), img, cfg).map.data
    b = forward_saliency(build_unet(cfg), img, cfg).map.data
    assert np.array_equal(a, b)
