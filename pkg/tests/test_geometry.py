import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cropforge.errors import GeometryError
from cropforge.geometry import OffsetCoefficients, Rect, decode_rect, encode_offsets, ground_truth_offsets

from blobs import gaussian_blob


def nested_pair(rng, size=200.0):
    """Anchor inside a crop, spanning at least a tenth of it on each axis."""
    w, h = rng.uniform(1.0, size, 2)
    x0, y0 = rng.uniform(-size, size, 2)
    outer = Rect(x0, y0, x0 + w, y0 + h)
    aw, ah = rng.uniform(0.1, 1.0, 2) * (w, h)
    ax0 = x0 + rng.uniform(0.0, w - aw)
    ay0 = y0 + rng.uniform(0.0, h - ah)
    return Rect(ax0, ay0, ax0 + aw, ay0 + ah), outer


def test_rect_ordering_enforced():
    with pytest.raises(GeometryError):
        Rect(5.0, 0.0, 1.0, 1.0)


def test_identity_encodes_to_zero():
    r = Rect(3.0, 4.0, 50.0, 70.0)
    assert encode_offsets(r, r) == OffsetCoefficients.zeros()


def test_inner_square():
    c = encode_offsets(Rect(25, 25, 75, 75), Rect(0, 0, 100, 100))
    assert c.as_array().tolist() == [0.25, 0.25, 0.25, 0.25]


def test_height_reconstruction():
    anchor = Rect(0, 0, 100, 50)
    c = OffsetCoefficients(0.25, 0.25, 0.0, 0.0)
    assert decode_rect(anchor, c).height == 100.0


def test_zero_coefficients_decode_to_anchor_exactly():
    anchor = Rect(1.25, 7.5, 33.0, 41.125)
    assert decode_rect(anchor, OffsetCoefficients.zeros()) == anchor


def test_grow_by_denominator():
    c = OffsetCoefficients(0.1, 0.1, 0.0, 0.0)
    assert decode_rect(Rect(0, 0, 10, 100), c).height == pytest.approx(125.0, abs=1e-12)


def test_denominator_floor_bounds_growth():
    r = decode_rect(Rect(0, 0, 10, 10), OffsetCoefficients(0.6, 0.6, 0.0, 0.0))
    # the crop height is capped at 10 / 0.05 = 200, then both gaps add 0.6 * 200
    assert r.height == pytest.approx(250.0, abs=1e-9)


def test_decode_clamps_to_bounds():
    r = decode_rect(Rect(10, 10, 20, 20), OffsetCoefficients(0.4, 0.4, 0.4, 0.4), Rect.full(30, 30))
    assert Rect.full(30, 30).contains(r)


def test_round_trip(rng):
    for _ in range(200):
        anchor, outer = nested_pair(rng)
        back = decode_rect(anchor, encode_offsets(anchor, outer))
        assert np.max(np.abs(back.as_array() - outer.as_array())) < 1e-9


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.1, 10.0))
def test_encoding_is_scale_invariant(seed, k):
    anchor, outer = nested_pair(np.random.default_rng(seed))
    a = encode_offsets(anchor, outer).as_array()
    b = encode_offsets(anchor.scale(k), outer.scale(k)).as_array()
    assert np.allclose(a, b, atol=1e-9)


def test_zero_area_inputs():
    with pytest.raises(GeometryError):
        encode_offsets(Rect(0, 0, 1, 1), Rect(0, 0, 0, 5))
    with pytest.raises(GeometryError):
        decode_rect(Rect(2, 2, 2, 9), OffsetCoefficients.zeros())


class TestFullImageTarget:
    def test_full_image_anchor_gives_zero(self):
        # a uniform map over a 3x3 image has anchor 1 -+ 3*sqrt(2/3), which clamps to the frame
        assert ground_truth_offsets(np.ones((3, 3)), 3, 3) == OffsetCoefficients.zeros()

    def test_centered_anchor_arithmetic(self):
        c = encode_offsets(Rect(30, 30, 70, 70), Rect.full(100, 100))
        assert c.as_array() == pytest.approx([0.30] * 4, abs=1e-15)

    def test_interior_anchor_is_decodable(self):
        c = ground_truth_offsets(gaussian_blob(64, 30.0, 34.0, 4.0), 64, 64)
        assert c.decodable
        assert np.all(c.as_array() > 0)
