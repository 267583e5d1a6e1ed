"""Datasets and input encodings.

Covers the two-class spiral benchmark (generated on the fly), MNIST in its
original IDX binary layout, CSV interchange for spiral sets, and the encoders
that turn raw feature vectors into initial conditions: a direct state for the
ODE classifier, or a piecewise history segment for the delay classifier.
"""

from __future__ import annotations

import csv
import gzip
import struct
from dataclasses import dataclass

import numpy as np

from dynlearn.errors import DataFormatError
from dynlearn.numerics import SeededRng, TimeGrid

IDX_MAGIC_IMAGES = 0x00000803
IDX_MAGIC_LABELS = 0x00000801


@dataclass
class LabeledDataset:
    """A batch of feature vectors with integer labels and one-hot targets.

    ``raw_images`` retains the untouched uint8 pixel array for image sets so
    that IDX files can be re-serialized byte for byte.
    """

    inputs: np.ndarray  # (K, n_features) float64
    labels: np.ndarray  # (K,) int64
    targets: np.ndarray  # (K, n_classes) float64 one-hot
    image_shape: tuple[int, int] | None = None
    raw_images: np.ndarray | None = None

    def __post_init__(self):
        k = self.inputs.shape[0]
        if self.labels.shape != (k,):
            raise ValueError(f"labels shape {self.labels.shape} does not match {k} inputs")
        if self.targets.shape[0] != k:
            raise ValueError(f"targets shape {self.targets.shape} does not match {k} inputs")

    def __len__(self) -> int:
        return self.inputs.shape[0]

    @property
    def n_classes(self) -> int:
        return self.targets.shape[1]

    def subset(self, indices: np.ndarray) -> "LabeledDataset":
        return LabeledDataset(
            inputs=self.inputs[indices],
            labels=self.labels[indices],
            targets=self.targets[indices],
            image_shape=self.image_shape,
            raw_images=None if self.raw_images is None else self.raw_images[indices],
        )

    def images(self) -> np.ndarray:
        """Inputs reshaped to ``(K, rows, cols)``; image sets only."""
        if self.image_shape is None:
            raise ValueError("dataset has no image shape")
        return self.inputs.reshape(len(self), *self.image_shape)


def one_hot(labels: np.ndarray, n_classes: int) -> np.ndarray:
    """One-hot rows for integer labels, shape ``(K, n_classes)``."""
    labels = np.asarray(labels, dtype=np.int64)
    if labels.min(initial=0) < 0 or labels.max(initial=-1) >= n_classes:
        raise ValueError(f"labels out of range for {n_classes} classes")
    out = np.zeros((labels.shape[0], n_classes), dtype=np.float64)
    out[np.arange(labels.shape[0]), labels] = 1.0
    return out


def from_labels(inputs: np.ndarray, labels: np.ndarray, n_classes: int) -> LabeledDataset:
    inputs = np.asarray(inputs, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    return LabeledDataset(inputs, labels, one_hot(labels, n_classes))


# ---------------------------------------------------------------------------
# Spirals
# ---------------------------------------------------------------------------


def generate_spirals(
    per_class: int,
    rng: SeededRng,
    noise_sd: float = 0.025,
    turns: float = 1.5,
) -> LabeledDataset:
    """Two interleaved planar spirals, one per class.

    Each point draws an angle uniformly on ``[0, turns * 2 pi)``, sits at
    radius ``0.1 + 0.8 * angle / (turns * 2 pi)``, is rotated by ``pi`` for
    class 1, and gets isotropic Gaussian noise of scale ``noise_sd``. Points
    are returned class 0 first, then class 1, unshuffled.
    """
    span = turns * 2.0 * np.pi
    points = []
    labels = []
    for cls in range(2):
        theta = rng.uniform(0.0, span, per_class)
        rho = 0.1 + 0.8 * theta / span
        x = rho * np.cos(theta + cls * np.pi)
        y = rho * np.sin(theta + cls * np.pi)
        pts = np.stack([x, y], axis=1) + rng.normal(0.0, noise_sd, (per_class, 2))
        points.append(pts)
        labels.append(np.full(per_class, cls, dtype=np.int64))
    return from_labels(np.concatenate(points), np.concatenate(labels), 2)


def save_spirals_csv(dataset: LabeledDataset, path) -> None:
    """Write a spiral set as CSV with header ``x1,x2,label``."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["x1", "x2", "label"])
        for (x1, x2), label in zip(dataset.inputs, dataset.labels):
            writer.writerow([f"{x1:.17g}", f"{x2:.17g}", int(label)])


def load_spirals_csv(path) -> LabeledDataset:
    """Read a spiral CSV produced by :func:`save_spirals_csv`."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["x1", "x2", "label"]:
            raise DataFormatError(f"{path}: expected header x1,x2,label, got {header}")
        xs, labels = [], []
        for i, row in enumerate(reader):
            if not row:
                continue
            if len(row) != 3:
                raise DataFormatError(f"{path}: row {i + 2} has {len(row)} fields, expected 3")
            try:
                xs.append((float(row[0]), float(row[1])))
                labels.append(int(row[2]))
            except ValueError as exc:
                raise DataFormatError(f"{path}: row {i + 2}: {exc}") from exc
    if not xs:
        raise DataFormatError(f"{path}: no data rows")
    return from_labels(np.array(xs), np.array(labels), 2)


# ---------------------------------------------------------------------------
# MNIST (IDX binary format)
# ---------------------------------------------------------------------------


def _open_maybe_gzip(path, mode="rb"):
    if str(path).endswith(".gz"):
        return gzip.open(path, mode)
    return open(path, mode)


def _read_idx(path, expected_magic: int, expected_dims: int) -> np.ndarray:
    with _open_maybe_gzip(path) as fh:
        raw = fh.read()
    if len(raw) < 4 * (1 + expected_dims):
        raise DataFormatError(f"{path}: truncated IDX header")
    (magic,) = struct.unpack(">I", raw[:4])
    if magic != expected_magic:
        raise DataFormatError(
            f"{path}: bad magic 0x{magic:08x} at offset 0, expected 0x{expected_magic:08x}"
        )
    dims = struct.unpack(f">{expected_dims}I", raw[4 : 4 + 4 * expected_dims])
    payload = raw[4 + 4 * expected_dims :]
    count = int(np.prod(dims))
    if len(payload) != count:
        raise DataFormatError(
            f"{path}: payload holds {len(payload)} bytes, header promises {count}"
        )
    return np.frombuffer(payload, dtype=np.uint8).reshape(dims)


def load_mnist_idx(images_path, labels_path) -> LabeledDataset:
    """Load an MNIST-style IDX image/label pair.

    Images use magic ``0x00000803`` with dimensions (count, rows, cols) and
    labels ``0x00000801`` with (count,); both big-endian uint8. Pixels are
    scaled to ``[0, 1]`` in ``inputs``; the original byte array is kept in
    ``raw_images``. Files ending in ``.gz`` are decompressed transparently.
    """
    images = _read_idx(images_path, IDX_MAGIC_IMAGES, 3)
    labels = _read_idx(labels_path, IDX_MAGIC_LABELS, 1)
    if images.shape[0] != labels.shape[0]:
        raise DataFormatError(
            f"image count {images.shape[0]} does not match label count {labels.shape[0]}"
        )
    k, rows, cols = images.shape
    inputs = images.reshape(k, rows * cols).astype(np.float64) / 255.0
    ds = from_labels(inputs, labels.astype(np.int64), 10)
    ds.image_shape = (rows, cols)
    ds.raw_images = images
    return ds


def save_mnist_idx(images: np.ndarray, labels: np.ndarray, images_path, labels_path) -> None:
    """Serialize uint8 images ``(K, rows, cols)`` and labels ``(K,)`` as IDX files."""
    images = np.ascontiguousarray(images, dtype=np.uint8)
    labels = np.ascontiguousarray(labels, dtype=np.uint8)
    if images.ndim != 3:
        raise ValueError(f"images must be (K, rows, cols), got shape {images.shape}")
    if labels.shape != (images.shape[0],):
        raise ValueError("labels must be one uint8 per image")
    with open(images_path, "wb") as fh:
        fh.write(struct.pack(">IIII", IDX_MAGIC_IMAGES, *images.shape))
        fh.write(images.tobytes())
    with open(labels_path, "wb") as fh:
        fh.write(struct.pack(">II", IDX_MAGIC_LABELS, labels.shape[0]))
        fh.write(labels.tobytes())


# ---------------------------------------------------------------------------
# Encoders: feature vectors -> delay history segments
# ---------------------------------------------------------------------------


def encode_spiral_histories(inputs: np.ndarray, grid: TimeGrid) -> np.ndarray:
    """Write 2-vectors onto the delay history as two constant half-segments.

    The first coordinate occupies ``[-tau, -tau/2)`` of the oscillator's
    optical component and the second occupies ``[-tau/2, 0]``; the filter
    component starts at rest. ``m_tau`` must be even so the midpoint falls on
    a grid sample. Returns ``(K, m_tau + 1, 2)``.
    """
    if grid.m_tau is None:
        raise ValueError("spiral encoding needs a delay grid")
    m = grid.m_tau
    if m % 2 != 0:
        raise ValueError(f"m_tau must be even to split the history in half, got {m}")
    inputs = np.atleast_2d(np.asarray(inputs, dtype=np.float64))
    k = inputs.shape[0]
    hist = np.zeros((k, m + 1, 2), dtype=np.float64)
    hist[:, : m // 2, 0] = inputs[:, 0:1]
    hist[:, m // 2 :, 0] = inputs[:, 1:2]
    return hist


def enlarge_image(image: np.ndarray, factor: int = 2) -> np.ndarray:
    """Nearest-neighbour upscale: each pixel becomes a ``factor x factor`` block."""
    image = np.asarray(image)
    return np.repeat(np.repeat(image, factor, axis=-2), factor, axis=-1)


def encode_image_histories(images: np.ndarray, grid: TimeGrid, enlarge: int = 2) -> np.ndarray:
    """Tile enlarged, flattened images along the delay history.

    Each image is upscaled by ``enlarge`` (nearest neighbour), flattened in
    row-major order to ``m`` values, and written cyclically onto the optical
    component of the ``m_tau + 1`` history samples (sample ``j`` reads pixel
    ``j mod m``, so the image repeats ``m_tau / m`` times along the delay
    line). The filter component starts at rest. Returns ``(K, m_tau + 1, 2)``.
    """
    if grid.m_tau is None:
        raise ValueError("image encoding needs a delay grid")
    images = np.asarray(images, dtype=np.float64)
    if images.ndim == 2:
        images = images[None]
    big = enlarge_image(images, enlarge)
    flat = big.reshape(big.shape[0], -1)
    m = grid.m_tau
    idx = np.arange(m + 1) % flat.shape[1]
    hist = np.zeros((images.shape[0], m + 1, 2), dtype=np.float64)
    hist[:, :, 0] = flat[:, idx]
    return hist
