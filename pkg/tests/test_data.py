import numpy as np
import pytest

from cropforge.data import (
    expand_box,
    generate_synthetic,
    load_dataset,
    manifest_checksum,
    read_crops,
    write_dataset,
)
from cropforge.errors import ParameterError
from cropforge.geometry import Rect


def test_same_seed_same_data():
    a = generate_synthetic(4, 32, seed=7)
    b = generate_synthetic(4, 32, seed=7)
    for x, y in zip(a, b):
        assert x.id == y.id and x.gt_crop == y.gt_crop
        assert np.array_equal(x.image, y.image) and np.array_equal(x.gt_saliency, y.gt_saliency)


def test_different_seed_differs():
    assert not np.array_equal(generate_synthetic(1, 32, 1)[0].image, generate_synthetic(1, 32, 2)[0].image)


def test_saliency_is_binary_object_mask():
    for s in generate_synthetic(6, 48, seed=3):
        assert set(np.unique(s.gt_saliency)) <= {0.0, 1.0}
        assert s.gt_saliency.sum() == np.count_nonzero(s.gt_saliency)
        assert s.image.shape == (48, 48, 3)
        assert Rect.full(48, 48).contains(s.gt_crop)


def test_margin_expansion():
    crop = expand_box(Rect(22, 22, 42, 42), 0.25, 64, 64)
    assert crop == Rect(17.0, 17.0, 47.0, 47.0)
    assert crop.width == 30.0 and crop.center == (32.0, 32.0)


def test_margin_clamped_to_image():
    assert expand_box(Rect(0, 0, 20, 20), 0.25, 64, 64) == Rect(0.0, 0.0, 25.0, 25.0)


def test_count_must_be_positive():
    with pytest.raises(ParameterError):
        generate_synthetic(0, 32, seed=0)


def test_disk_round_trip(tmp_path):
    samples = generate_synthetic(3, 32, seed=5, channels=1)
    write_dataset(samples, tmp_path)
    assert len(read_crops(tmp_path / "crops.csv")) == 3
    back = load_dataset(tmp_path)
    for s, b in zip(samples, back):
        assert b.id == s.id and b.gt_crop == s.gt_crop
        # images are quantized to 8 bits before writing, so they survive exactly
        assert np.array_equal(b.image, s.image)
        assert np.array_equal(b.gt_saliency, s.gt_saliency)
    first = manifest_checksum(tmp_path)
    write_dataset(samples, tmp_path)
    assert manifest_checksum(tmp_path) == first


def test_missing_crop_row_loads_as_none(tmp_path):
    write_dataset(generate_synthetic(2, 32, seed=5), tmp_path)
    lines = (tmp_path / "crops.csv").read_text().splitlines()
    (tmp_path / "crops.csv").write_text("\n".join(lines[:-1]) + "\n")
    loaded = load_dataset(tmp_path)
    assert loaded[0].gt_crop is not None and loaded[1].gt_crop is None
