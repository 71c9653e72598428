import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sparse_rs.tensor_io import (BinaryFeatureVector, DatasetError, ImageTensor, LabeledDataset,
                                 load_dataset, quantize, read_pnm, save_dataset, synth_dataset,
                                 write_pnm)


def test_image_tensor_is_read_only_and_validated():
    img = ImageTensor(np.zeros((2, 3, 3)))
    assert img.shape == (2, 3, 3) and img.height == 2 and img.width == 3
    with pytest.raises(ValueError):
        img.data[0, 0, 0] = 1
    with pytest.raises(ValueError, match=r"\[0, 1\]"):
        ImageTensor(np.full((2, 2, 3), 1.5))
    with pytest.raises(ValueError, match="channels"):
        ImageTensor(np.zeros((2, 2, 2)))


def test_quantize_round_half_up_on_byte_grid():
    vals = np.array([0.0, 1.0, 0.5, 127.5 / 255, 1 / 255])
    assert quantize(vals).tolist() == [0, 255, 128, 128, 1]


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 5), st.integers(1, 5), st.sampled_from([1, 3]), st.integers(0, 2**31))
def test_pnm_roundtrip_is_exact_on_byte_grid(tmp_path_factory, h, w, c, seed):
    rng = np.random.default_rng(seed)
    img = rng.integers(0, 256, size=(h, w, c)).astype(np.float32) / 255
    path = tmp_path_factory.mktemp("pnm") / "x.pnm"
    write_pnm(path, img)
    back = read_pnm(path)
    assert back.shape == (h, w, c)
    assert np.array_equal(quantize(back), quantize(img))


def test_pnm_header_comments_are_skipped(tmp_path):
    p = tmp_path / "c.pgm"
    p.write_bytes(b"P5\n# a comment\n2 1\n# another\n255\n\x00\xff")
    assert read_pnm(p)[:, :, 0].tolist() == [[0.0, 1.0]]


@pytest.mark.parametrize("payload, message", [
    (b"P3\n1 1\n255\n0 0 0", "magic"),
    (b"P5\n1 1\n65535\n\x00\x00", "maxval"),
    (b"P6\n2 2\n255\n\x00\x00", "raster bytes"),
])
def test_pnm_errors_name_the_file(tmp_path, payload, message):
    p = tmp_path / "bad.ppm"
    p.write_bytes(payload)
    with pytest.raises(DatasetError, match=message) as exc:
        read_pnm(p)
    assert "bad.ppm" in str(exc.value)


def test_dataset_roundtrip(tmp_path):
    ds = synth_dataset(3, 12, 4, 5, 3, 4)
    save_dataset(ds, tmp_path)
    back = load_dataset(tmp_path)
    assert back.class_count == 4
    assert np.array_equal(back.labels, ds.labels)
    assert np.array_equal(quantize(back.images), quantize(ds.images))


def test_dataset_errors(tmp_path):
    with pytest.raises(DatasetError, match="missing labels"):
        load_dataset(tmp_path)
    write_pnm(tmp_path / "a.ppm", np.zeros((2, 2, 3)))
    write_pnm(tmp_path / "b.ppm", np.zeros((3, 2, 3)))
    (tmp_path / "labels.csv").write_text("a.ppm,0\nb.ppm,1\n")
    with pytest.raises(DatasetError, match="differs"):
        load_dataset(tmp_path)
    (tmp_path / "labels.csv").write_text("a.ppm,5\n")
    with pytest.raises(DatasetError, match="outside"):
        load_dataset(tmp_path, class_count=3)
    (tmp_path / "labels.csv").write_text("missing.ppm,0\n")
    with pytest.raises(DatasetError, match="not found"):
        load_dataset(tmp_path)


def test_synth_dataset_is_deterministic_and_balanced():
    a = synth_dataset(7, 40, 8, 8, 3, 4)
    b = synth_dataset(7, 40, 8, 8, 3, 4)
    assert np.array_equal(a.images, b.images) and np.array_equal(a.labels, b.labels)
    assert np.bincount(a.labels).tolist() == [10] * 4
    assert a.images.min() >= 0 and a.images.max() <= 1
    with pytest.raises(ValueError):
        synth_dataset(0, 3, 4, 4, 1, 4)


def test_binary_feature_vector():
    v = BinaryFeatureVector(np.array([0, 1, 0, 0]), np.array([True, True, False, True]))
    assert v.dim == 4 and v.as_image().shape == (4, 1, 1)
    assert v.addable().tolist() == [0, 3]
    with pytest.raises(ValueError):
        BinaryFeatureVector(np.array([0, 2]))


def test_labeled_dataset_subset():
    ds = LabeledDataset(np.zeros((3, 2, 2, 1)), [0, 1, 1], 2)
    sub = ds.subset([2, 0])
    assert sub.labels.tolist() == [1, 0] and sub.names == ["img00002", "img00000"]
