"""Image tensors, binary PPM/PGM files and labelled datasets.

Images are float32 arrays of shape ``(h, w, c)`` with values in ``[0, 1]``.
Bytes map to values by ``v / 255`` so that both corners of the color cube
are exactly representable.
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class DatasetError(ValueError):
    """Raised for malformed image files or dataset directories."""


@dataclass(frozen=True)
class ImageTensor:
    data: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.float32)
        if arr.ndim != 3 or min(arr.shape) < 1:
            raise ValueError(f"expected an (h, w, c) array, got shape {arr.shape}")
        if arr.shape[2] not in (1, 3):
            raise ValueError(f"channels must be 1 or 3, got {arr.shape[2]}")
        if not np.all((arr >= 0.0) & (arr <= 1.0)):
            raise ValueError("image values must lie in [0, 1]")
        arr = arr.copy()
        arr.flags.writeable = False
        object.__setattr__(self, "data", arr)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]

    @property
    def shape(self) -> tuple:
        return self.data.shape

    def to_bytes(self) -> bytes:
        return quantize(self.data).tobytes()


@dataclass(frozen=True)
class BinaryFeatureVector:
    """Binary input ``x in {0,1}^d`` and the features an attacker may add."""

    bits: np.ndarray
    mutable_mask: np.ndarray = None

    def __post_init__(self):
        bits = np.asarray(self.bits)
        if bits.ndim != 1:
            raise ValueError("bits must be one-dimensional")
        if not np.all((bits == 0) | (bits == 1)):
            raise ValueError("bits must be 0 or 1")
        mask = self.mutable_mask
        mask = np.ones(bits.shape, dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
        if mask.shape != bits.shape:
            raise ValueError("mutable_mask length must equal dim")
        object.__setattr__(self, "bits", bits.astype(np.float32))
        object.__setattr__(self, "mutable_mask", mask)

    @property
    def dim(self) -> int:
        return self.bits.shape[0]

    def as_image(self) -> np.ndarray:
        """View as a ``d x 1 x 1`` image so the image attacks apply unchanged."""
        return self.bits.reshape(-1, 1, 1)

    def addable(self) -> np.ndarray:
        """Indices of features that are currently 0 and may be switched on."""
        return np.flatnonzero(self.mutable_mask & (self.bits == 0))


@dataclass
class LabeledDataset:
    images: np.ndarray  # (n, h, w, c) float32
    labels: np.ndarray  # (n,) int64
    class_count: int
    names: list = field(default_factory=list)

    def __post_init__(self):
        self.images = np.asarray(self.images, dtype=np.float32)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.images.ndim != 4:
            raise ValueError("images must have shape (n, h, w, c)")
        if len(self.images) != len(self.labels):
            raise ValueError("images and labels differ in length")
        if len(self.labels) and (self.labels.min() < 0 or self.labels.max() >= self.class_count):
            raise ValueError(f"labels must lie in [0, {self.class_count})")
        if not self.names:
            self.names = [f"img{i:05d}" for i in range(len(self.labels))]

    def __len__(self):
        return len(self.labels)

    def __getitem__(self, i) -> ImageTensor:
        return ImageTensor(self.images[i])

    @property
    def image_shape(self) -> tuple:
        return tuple(self.images.shape[1:])

    def subset(self, idx) -> "LabeledDataset":
        idx = np.asarray(idx)
        return LabeledDataset(self.images[idx], self.labels[idx], self.class_count,
                              [self.names[i] for i in idx])


def quantize(x: np.ndarray) -> np.ndarray:
    """Map ``[0, 1]`` values to bytes, inverse of ``v / 255`` on the byte grid."""
    return np.clip(np.floor(np.asarray(x, dtype=np.float64) * 255.0 + 0.5), 0, 255).astype(np.uint8)


def _read_header(raw: bytes, path) -> tuple:
    tokens = []
    pos = 0
    n = len(raw)
    while len(tokens) < 4:
        while pos < n and raw[pos:pos + 1].isspace():
            pos += 1
        if pos < n and raw[pos:pos + 1] == b"#":
            while pos < n and raw[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < n and not raw[pos:pos + 1].isspace() and raw[pos:pos + 1] != b"#":
            pos += 1
        if start == pos:
            raise DatasetError(f"{path}: truncated header")
        tokens.append(raw[start:pos])
    # exactly one whitespace byte separates the header from the raster
    return tokens, pos + 1


def read_pnm(path) -> np.ndarray:
    """Read a binary PPM (P6) or PGM (P5) file with maxval 255."""
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise DatasetError(f"{path}: cannot read image ({exc.strerror})") from exc
    tokens, offset = _read_header(raw, path)
    magic = tokens[0]
    if magic == b"P6":
        c = 3
    elif magic == b"P5":
        c = 1
    else:
        raise DatasetError(f"{path}: unsupported magic {magic!r} (need P5 or P6)")
    try:
        w, h, maxval = (int(t) for t in tokens[1:])
    except ValueError:
        raise DatasetError(f"{path}: malformed header") from None
    if maxval != 255:
        raise DatasetError(f"{path}: maxval must be 255, got {maxval}")
    if w < 1 or h < 1:
        raise DatasetError(f"{path}: empty image")
    size = w * h * c
    body = raw[offset:offset + size]
    if len(body) != size:
        raise DatasetError(f"{path}: expected {size} raster bytes, found {len(body)}")
    return np.frombuffer(body, dtype=np.uint8).reshape(h, w, c).astype(np.float32) / np.float32(255.0)


def write_pnm(path, image) -> None:
    """Write ``image`` as P6 (3 channels) or P5 (1 channel)."""
    arr = image.data if isinstance(image, ImageTensor) else np.asarray(image)
    if arr.ndim == 2:
        arr = arr[:, :, None]
    h, w, c = arr.shape
    magic = {3: b"P6", 1: b"P5"}.get(c)
    if magic is None:
        raise ValueError("only 1- or 3-channel images can be written")
    with open(path, "wb") as fh:
        fh.write(magic + b"\n%d %d\n255\n" % (w, h))
        fh.write(quantize(arr).tobytes())


def load_dataset(dir_path, class_count: int | None = None) -> LabeledDataset:
    """Load ``labels.csv`` (``filename,label`` rows, no header) and its images."""
    dir_path = Path(dir_path)
    labels_path = dir_path / "labels.csv"
    if not labels_path.is_file():
        raise DatasetError(f"{labels_path}: missing labels file")
    names, labels = [], []
    with open(labels_path, newline="", encoding="utf-8") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row:
                continue
            if len(row) != 2:
                raise DatasetError(f"{labels_path}:{lineno}: expected 'filename,label'")
            try:
                label = int(row[1])
            except ValueError:
                raise DatasetError(f"{labels_path}:{lineno}: bad label {row[1]!r}") from None
            names.append(row[0])
            labels.append(label)
    if not names:
        raise DatasetError(f"{labels_path}: no entries")

    k = max(labels) + 1 if class_count is None else class_count
    images = []
    for name, label in zip(names, labels):
        if label < 0 or label >= k:
            raise DatasetError(f"{name}: label {label} outside [0, {k})")
        img_path = dir_path / name
        if not img_path.is_file():
            raise DatasetError(f"{name}: image file not found in {dir_path}")
        img = read_pnm(img_path)
        if images and img.shape != images[0].shape:
            raise DatasetError(
                f"{name}: shape {img.shape} differs from {images[0].shape} of {names[0]}")
        images.append(img)
    return LabeledDataset(np.stack(images), np.array(labels), k, names)


def save_dataset(dataset: LabeledDataset, dir_path) -> None:
    dir_path = Path(dir_path)
    dir_path.mkdir(parents=True, exist_ok=True)
    ext = ".ppm" if dataset.image_shape[2] == 3 else ".pgm"
    lines = []
    for i, (img, label) in enumerate(zip(dataset.images, dataset.labels)):
        name = dataset.names[i]
        if not os.path.splitext(name)[1]:
            name += ext
        write_pnm(dir_path / name, img)
        lines.append(f"{name},{int(label)}\n")
    with open(dir_path / "labels.csv", "w", encoding="utf-8", newline="\n") as fh:
        fh.writelines(lines)


def _smooth_blobs(rng: np.random.Generator, h: int, w: int, c: int, n_blobs: int) -> np.ndarray:
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    img = np.full((h, w, c), 0.5)
    for _ in range(n_blobs):
        cy, cx = rng.uniform(0, h), rng.uniform(0, w)
        sigma = rng.uniform(0.12, 0.3) * max(h, w)
        amp = rng.uniform(-0.5, 0.5, size=c)
        bump = np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2 * sigma ** 2))
        img += bump[:, :, None] * amp
    return img


def synth_dataset(seed: int, n: int, h: int, w: int, c: int, classes: int,
                  noise: float = 0.1, n_blobs: int = 4, contrast: float = 1.0) -> LabeledDataset:
    """Deterministic toy classification data.

    Each class gets a template of random smooth color blobs; samples are the
    template (scaled towards gray by ``contrast``) plus Gaussian noise of
    standard deviation ``noise``, clipped to ``[0, 1]``.
    """
    if classes < 2:
        raise ValueError("need at least 2 classes")
    if n < classes:
        raise ValueError(f"n={n} is smaller than the number of classes {classes}")
    rng = np.random.default_rng(seed)
    templates = [_smooth_blobs(rng, h, w, c, n_blobs) for _ in range(classes)]
    templates = [0.5 + contrast * (t - 0.5) for t in templates]
    labels = rng.permutation(np.arange(n) % classes)
    images = np.empty((n, h, w, c), dtype=np.float32)
    for i, label in enumerate(labels):
        sample = templates[label] + noise * rng.standard_normal((h, w, c))
        images[i] = np.clip(sample, 0.0, 1.0)
    return LabeledDataset(images, labels, classes)
