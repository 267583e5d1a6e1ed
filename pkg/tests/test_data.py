import gzip
import struct

import numpy as np
import pytest

from dynlearn.data import (
    LabeledDataset,
    encode_image_histories,
    encode_spiral_histories,
    enlarge_image,
    from_labels,
    generate_spirals,
    load_mnist_idx,
    load_spirals_csv,
    one_hot,
    save_mnist_idx,
    save_spirals_csv,
)
from dynlearn.errors import DataFormatError
from dynlearn.numerics import SeededRng, make_time_grid


def test_one_hot():
    np.testing.assert_array_equal(one_hot(np.array([0]), 2), [[1.0, 0.0]])
    np.testing.assert_array_equal(one_hot(np.array([2, 0]), 3), [[0, 0, 1], [1, 0, 0]])
    with pytest.raises(ValueError):
        one_hot(np.array([3]), 3)


def test_spiral_count_and_balance():
    data = generate_spirals(500, SeededRng(7))
    assert len(data) == 1000
    assert int(np.sum(data.labels == 0)) == 500
    assert int(np.sum(data.labels == 1)) == 500
    assert data.targets.shape == (1000, 2)
    np.testing.assert_array_equal(data.targets[:, 0], (data.labels == 0).astype(float))


def test_spiral_deterministic_per_seed():
    a = generate_spirals(50, SeededRng(3))
    b = generate_spirals(50, SeededRng(3))
    c = generate_spirals(50, SeededRng(4))
    np.testing.assert_array_equal(a.inputs, b.inputs)
    assert not np.array_equal(a.inputs, c.inputs)


def test_spiral_radius_law_at_theta_zero():
    # noise off: theta = 0 lands at (0.1, 0) for class 0 and (-0.1, 0) for class 1

    class _ThetaZero:
        def uniform(self, low, high, size=None):
            return np.zeros(size)

        def normal(self, loc=0.0, scale=1.0, size=None):
            return np.zeros(size)

    data = generate_spirals(1, _ThetaZero(), noise_sd=0.0)
    np.testing.assert_allclose(data.inputs[0], [0.1, 0.0], atol=1e-15)
    np.testing.assert_allclose(data.inputs[1], [-0.1, 0.0], atol=1e-15)


def test_spiral_points_stay_in_box():
    data = generate_spirals(2000, SeededRng(0))
    assert np.all(np.abs(data.inputs) <= 1.1)


def test_noise_free_classes_are_disjoint():
    data = generate_spirals(400, SeededRng(9), noise_sd=0.0)
    x0 = data.inputs[data.labels == 0]
    x1 = data.inputs[data.labels == 1]
    gaps = np.linalg.norm(x0[:, None, :] - x1[None, :, :], axis=2)
    assert gaps.min() > 0.01


def test_spiral_csv_round_trip(tmp_path):
    data = generate_spirals(20, SeededRng(1))
    path = tmp_path / "spirals.csv"
    save_spirals_csv(data, path)
    header = path.read_text().splitlines()[0]
    assert header == "x1,x2,label"
    loaded = load_spirals_csv(path)
    np.testing.assert_array_equal(loaded.inputs, data.inputs)
    np.testing.assert_array_equal(loaded.labels, data.labels)


def test_spiral_csv_rejects_garbage(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("x1,x2,label\n0.1,0.2,zero\n")
    with pytest.raises(DataFormatError) as err:
        load_spirals_csv(path)
    assert "2" in str(err.value)  # offending line number


def _synthetic_idx(tmp_path, count=7, side=4, gz=False):
    rng = np.random.default_rng(0)
    images = rng.integers(0, 256, (count, side, side)).astype(np.uint8)
    labels = rng.integers(0, 10, count).astype(np.uint8)
    suffix = ".gz" if gz else ""
    ipath = tmp_path / f"images-idx3-ubyte{suffix}"
    lpath = tmp_path / f"labels-idx1-ubyte{suffix}"
    save_mnist_idx(images, labels, ipath, lpath)
    return images, labels, ipath, lpath


def test_idx_round_trip_is_byte_exact(tmp_path):
    images, labels, ipath, lpath = _synthetic_idx(tmp_path)
    raw = ipath.read_bytes()
    magic, count, rows, cols = struct.unpack(">IIII", raw[:16])
    assert (magic, count, rows, cols) == (0x803, 7, 4, 4)
    assert raw[16:] == images.tobytes()
    lraw = lpath.read_bytes()
    assert struct.unpack(">II", lraw[:8]) == (0x801, 7)
    assert lraw[8:] == labels.tobytes()

    data = load_mnist_idx(ipath, lpath)
    np.testing.assert_array_equal(data.raw_images, images)
    np.testing.assert_array_equal(data.labels, labels)
    np.testing.assert_allclose(data.inputs, images.reshape(7, -1) / 255.0)
    assert data.image_shape == (4, 4)


def test_idx_gzip_transparent(tmp_path):
    images, labels, ipath, lpath = _synthetic_idx(tmp_path)
    gzi = tmp_path / "im.gz"
    gzl = tmp_path / "lb.gz"
    gzi.write_bytes(gzip.compress(ipath.read_bytes()))
    gzl.write_bytes(gzip.compress(lpath.read_bytes()))
    data = load_mnist_idx(gzi, gzl)
    np.testing.assert_array_equal(data.raw_images, images)
    np.testing.assert_array_equal(data.labels, labels)


def test_idx_bad_magic(tmp_path):
    path = tmp_path / "bogus"
    path.write_bytes(struct.pack(">IIII", 0x9999, 1, 2, 2) + b"\x00" * 4)
    with pytest.raises(DataFormatError) as err:
        load_mnist_idx(path, path)
    assert "magic" in str(err.value).lower()


def test_idx_truncated_payload(tmp_path):
    path = tmp_path / "short"
    path.write_bytes(struct.pack(">IIII", 0x803, 2, 2, 2) + b"\x00" * 3)
    labels = tmp_path / "labels"
    labels.write_bytes(struct.pack(">II", 0x801, 2) + b"\x00\x01")
    with pytest.raises(DataFormatError):
        load_mnist_idx(path, labels)


def test_idx_count_mismatch(tmp_path):
    images, labels, ipath, lpath = _synthetic_idx(tmp_path, count=3)
    other = tmp_path / "two-labels"
    other.write_bytes(struct.pack(">II", 0x801, 2) + b"\x00\x01")
    with pytest.raises(DataFormatError):
        load_mnist_idx(ipath, other)


def test_encode_spiral_history_splits_halves():
    grid = make_time_grid(-4 * 0.5, 0.5, 8, m_tau=4)
    hist = encode_spiral_histories(np.array([[0.3, -0.5]]), grid)
    assert hist.shape == (1, 5, 2)
    np.testing.assert_allclose(hist[0, :, 0], [0.3, 0.3, -0.5, -0.5, -0.5])
    np.testing.assert_allclose(hist[0, :, 1], np.zeros(5))


def test_encode_spiral_requires_even_delay_line():
    grid = make_time_grid(-3 * 0.5, 0.5, 6, m_tau=3)
    with pytest.raises(ValueError):
        encode_spiral_histories(np.zeros((1, 2)), grid)


def test_enlarge_image_doubles_pixels():
    img = np.array([[1.0, 2.0], [3.0, 4.0]])
    big = enlarge_image(img)
    assert big.shape == (4, 4)
    np.testing.assert_array_equal(big[:2, :2], [[1.0, 1.0], [1.0, 1.0]])
    np.testing.assert_array_equal(big[2:, 2:], [[4.0, 4.0], [4.0, 4.0]])


def test_encode_image_constant_value():
    grid = make_time_grid(-6 * 1.0, 1.0, 12, m_tau=6)
    images = np.full((2, 2, 2), 0.25)
    hist = encode_image_histories(images, grid)
    assert hist.shape == (2, 7, 2)
    np.testing.assert_allclose(hist[:, :, 0], 0.25)
    np.testing.assert_allclose(hist[:, :, 1], 0.0)


def test_encode_image_cycles_pixels():
    grid = make_time_grid(-5.0, 1.0, 10, m_tau=5)
    image = np.arange(4.0).reshape(1, 2, 2) / 4.0
    hist = encode_image_histories(image, grid)
    # enlarged image flattens to 16 values; only m_tau + 1 = 6 samples used
    flat = enlarge_image(image[0]).reshape(-1)
    np.testing.assert_allclose(hist[0, :, 0], flat[np.arange(6) % 16])


def test_mnist_sized_encoding_shape():
    m_tau = 3136  # 2 * (2*28)^2 samples = one pass over the enlarged image
    grid = make_time_grid(-m_tau * 0.1, 0.1, 2 * m_tau, m_tau)
    images = np.zeros((1, 28, 28))
    hist = encode_image_histories(images, grid)
    assert hist.shape == (1, m_tau + 1, 2)


def test_dataset_subset_keeps_alignment():
    data = generate_spirals(10, SeededRng(2))
    sub = data.subset(np.array([3, 5, 17]))
    assert len(sub) == 3
    np.testing.assert_array_equal(sub.inputs[1], data.inputs[5])
    np.testing.assert_array_equal(sub.labels, data.labels[[3, 5, 17]])


def test_from_labels_shapes():
    data = from_labels(np.zeros((4, 2)), np.array([0, 1, 1, 0]), 2)
    assert isinstance(data, LabeledDataset)
    assert data.n_classes == 2
    np.testing.assert_array_equal(data.targets.sum(axis=1), np.ones(4))
