import numpy as np
import pytest
from PIL import Image

from flowalign.data import (
    DatasetSpec,
    ImageSample,
    generate_shapes,
    load_image_dir,
    read_dataset,
    render_sample,
    samples_to_arrays,
    write_dataset,
)
from flowalign.errors import MissingArtifactError


def test_one_sample_per_class_when_count_equals_classes():
    samples = generate_shapes(DatasetSpec(count=8, classes=8, seed=1))
    assert sorted(s.label for s in samples) == list(range(8))


def test_generation_is_bit_deterministic():
    spec = DatasetSpec(count=12, size=32, classes=8, seed=5)
    a, _ = samples_to_arrays(generate_shapes(spec))
    b, _ = samples_to_arrays(generate_shapes(spec))
    assert np.array_equal(a, b)


def test_balanced_partition_of_1000_over_8():
    samples = generate_shapes(DatasetSpec(count=1000, size=16, classes=8, seed=7))
    counts = np.bincount([s.label for s in samples], minlength=8)
    assert counts.tolist() == [125] * 8


def test_pixels_finite_and_in_range():
    pixels, labels = samples_to_arrays(generate_shapes(DatasetSpec(count=16, size=32, classes=8, seed=2)))
    assert pixels.dtype == np.float32
    assert np.isfinite(pixels).all()
    assert pixels.min() >= -1.0 and pixels.max() <= 1.0
    assert labels.dtype == np.uint16


def test_render_is_order_independent():
    spec = DatasetSpec(count=64, size=16, classes=8, seed=3)
    direct = render_sample(spec, 37)
    from_batch = generate_shapes(spec)[37]
    assert np.array_equal(direct.pixels, from_batch.pixels)
    assert direct.id == from_batch.id == 37


def test_classes_are_distinct_images():
    spec = DatasetSpec(count=8, size=32, classes=8, seed=11)
    samples = generate_shapes(spec)
    flat = [s.pixels.ravel() for s in samples]
    for i in range(8):
        for j in range(i + 1, 8):
            assert not np.array_equal(flat[i], flat[j])


def test_spec_validation():
    with pytest.raises(ValueError):
        DatasetSpec(count=4, classes=8)
    with pytest.raises(ValueError):
        DatasetSpec(count=8, size=30)


def test_dataset_roundtrip(tmp_path):
    spec = DatasetSpec(count=10, size=16, classes=5, seed=9)
    samples = generate_shapes(spec)
    write_dataset(tmp_path / "ds", spec, samples)
    pixels, labels, spec2 = read_dataset(tmp_path / "ds")
    ref_pixels, ref_labels = samples_to_arrays(samples)
    assert spec2 == spec
    assert np.array_equal(pixels, ref_pixels)
    assert np.array_equal(labels, ref_labels.astype(np.int64))


def test_read_missing_dataset(tmp_path):
    with pytest.raises(MissingArtifactError):
        read_dataset(tmp_path / "nope")


def _save_png(path, array_hw3):
    Image.fromarray(array_hw3.astype(np.uint8)).save(path)


def test_load_image_dir_counts_and_labels(tmp_path):
    for cls in ("a_first", "b_second"):
        (tmp_path / cls).mkdir()
        for i in range(3):
            _save_png(tmp_path / cls / f"{i}.png", np.full((16, 16, 3), 128))
    samples = load_image_dir(tmp_path, size=16)
    assert len(samples) == 6
    assert [s.label for s in samples] == [0, 0, 0, 1, 1, 1]
    assert [s.id for s in samples] == list(range(6))


def test_load_image_dir_white_maps_to_one(tmp_path):
    (tmp_path / "only").mkdir()
    _save_png(tmp_path / "only" / "w.png", np.full((8, 8, 3), 255))
    sample = load_image_dir(tmp_path, size=8)[0]
    assert np.allclose(sample.pixels, 1.0)
    assert sample.pixels.shape == (3, 8, 8)


def test_load_image_dir_center_crop_48x32(tmp_path):
    # 48 wide, 32 tall; center crop keeps columns 8..40
    arr = np.zeros((32, 48, 3), dtype=np.uint8)
    arr[:, 8:40, :] = 200
    (tmp_path / "c").mkdir()
    _save_png(tmp_path / "c" / "x.png", arr)
    sample = load_image_dir(tmp_path, size=32)[0]
    assert sample.pixels.shape == (3, 32, 32)
    # the kept region is uniformly 200 -> constant output
    assert np.allclose(sample.pixels, 200 / 127.5 - 1.0, atol=1e-6)


def test_load_image_dir_errors(tmp_path):
    with pytest.raises(MissingArtifactError):
        load_image_dir(tmp_path / "missing", size=16)
    empty = tmp_path / "empty"
    empty.mkdir()
    with pytest.raises(ValueError):
        load_image_dir(empty, size=16)
    bad = tmp_path / "bad"
    (bad / "k").mkdir(parents=True)
    (bad / "k" / "broken.png").write_bytes(b"not a png")
    with pytest.raises(ValueError, match="broken.png"):
        load_image_dir(bad, size=16)
