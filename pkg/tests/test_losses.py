import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cropforge.errors import ParameterError
from cropforge.geometry import Rect
from cropforge.losses import bce_loss, bde, iou, offset_l2_loss, total_loss


class TestBce:
    def test_symmetric_case(self):
        assert bce_loss([[0.5]], [[0.5]]) == pytest.approx(math.log(2.0), abs=1e-15)

    def test_near_perfect(self):
        assert bce_loss([1 - 1e-7], [1.0]) == pytest.approx(1e-7, rel=1e-6)

    def test_quarter(self):
        assert bce_loss([0.25], [1.0]) == pytest.approx(math.log(4.0), abs=1e-15)

    def test_sums_over_pixels(self):
        assert bce_loss(np.full((3, 4), 0.5), np.full((3, 4), 0.5)) == pytest.approx(12 * math.log(2.0))

    def test_saturated_prediction_stays_finite(self):
        assert np.isfinite(bce_loss([0.0, 1.0], [1.0, 0.0]))


class TestOffsetLoss:
    def test_identical(self):
        assert offset_l2_loss([0.1, 0.2, 0.3, 0.4], [0.1, 0.2, 0.3, 0.4]) == 0.0

    def test_single_component(self):
        assert offset_l2_loss([0.1, 0, 0, 0], np.zeros(4)) == pytest.approx(0.01, abs=1e-15)

    def test_all_components(self):
        assert offset_l2_loss([0.1, 0.2, 0.3, 0.4], np.zeros(4)) == pytest.approx(0.30, abs=1e-15)


class TestTotal:
    def test_weighted_sum(self):
        assert total_loss(0.5, 0.2, 1.0).total == pytest.approx(0.7, abs=1e-15)
        assert total_loss(1.0, 0.5, 2.0).total == 2.0

    def test_decoupled(self):
        assert total_loss(0.4, 9.0, 0.0).total == 0.4

    def test_negative_weight(self):
        with pytest.raises(ParameterError):
            total_loss(1.0, 1.0, -0.1)


class TestIou:
    def test_identical(self):
        assert iou(Rect(1, 2, 30, 40), Rect(1, 2, 30, 40)) == 1.0

    def test_disjoint(self):
        assert iou(Rect(0, 0, 10, 10), Rect(20, 20, 30, 30)) == 0.0

    def test_half_overlap(self):
        assert abs(iou(Rect(0, 0, 100, 100), Rect(50, 0, 150, 100)) - 1.0 / 3.0) <= 1e-12

    def test_empty_union(self):
        assert iou(Rect(5, 5, 5, 5), Rect(5, 5, 5, 5)) == 0.0

    @given(st.lists(st.floats(0, 100), min_size=8, max_size=8))
    def test_symmetric_and_bounded(self, v):
        a = Rect(min(v[0], v[1]), min(v[2], v[3]), max(v[0], v[1]), max(v[2], v[3]))
        b = Rect(min(v[4], v[5]), min(v[6], v[7]), max(v[4], v[5]), max(v[6], v[7]))
        assert iou(a, b) == iou(b, a)
        assert 0.0 <= iou(a, b) <= 1.0


class TestBde:
    def test_identical(self):
        assert bde(Rect(1, 2, 3, 4), Rect(1, 2, 3, 4), 10, 10) == 0.0

    def test_single_edge(self):
        assert abs(bde(Rect(0, 0, 90, 100), Rect(0, 0, 100, 100), 100, 100) - 0.025) <= 1e-12

    def test_uniform_displacement(self):
        assert bde(Rect(0, 0, 100, 100), Rect(25, 25, 75, 75), 100, 100) == 0.25

    def test_zero_dims(self):
        with pytest.raises(ParameterError):
            bde(Rect(0, 0, 1, 1), Rect(0, 0, 1, 1), 0, 10)


@given(st.lists(st.floats(0, 100), min_size=8, max_size=8), st.floats(-50, 50), st.floats(0.1, 10))
def test_metrics_invariant_under_joint_motion(v, shift, k):
    a = Rect(min(v[0], v[1]), min(v[2], v[3]), max(v[0], v[1]) + 1, max(v[2], v[3]) + 1)
    b = Rect(min(v[4], v[5]), min(v[6], v[7]), max(v[4], v[5]) + 1, max(v[6], v[7]) + 1)
    base = iou(a, b)
    assert iou(a.translate(shift, -shift), b.translate(shift, -shift)) == pytest.approx(base, abs=1e-9)
    assert iou(a.scale(k), b.scale(k)) == pytest.approx(base, abs=1e-9)
    assert bde(a.scale(k), b.scale(k), 120 * k, 80 * k) == pytest.approx(bde(a, b, 120, 80), abs=1e-12)
    assert bde(a, b, 120, 80) == bde(b, a, 120, 80)
