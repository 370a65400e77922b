"""Datasets: IDX (MNIST layout) files, a seeded synthetic set, and splits.

IDX layout (big-endian throughout)::

    images: u32 magic 0x00000803, u32 count, u32 rows, u32 cols, then count*rows*cols u8 pixels
    labels: u32 magic 0x00000801, u32 count, then count u8 labels

Every dataset produced here has pixels in [0, 1].
"""
from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import BadMagicError, CountMismatchError, DatasetError, SplitOverflowError, TruncatedFileError
from .rng import Xorshift64Star

IMAGES_MAGIC = 0x00000803
LABELS_MAGIC = 0x00000801


@dataclass(frozen=True)
class LabeledDataset:
    images: np.ndarray  # [N, C, H, W], float64 in [0, 1]
    labels: np.ndarray  # [N], int64
    num_classes: int
    name: str = "dataset"

    def __post_init__(self):
        if self.images.ndim != 4:
            raise DatasetError(f"images must be [N,C,H,W], got shape {self.images.shape}")
        if len(self.labels) != len(self.images):
            raise CountMismatchError(f"{len(self.images)} images but {len(self.labels)} labels")
        if len(self.images) and (self.images.min() < 0.0 or self.images.max() > 1.0):
            raise DatasetError("pixels must lie in [0, 1]")
        if len(self.labels) and (self.labels.min() < 0 or self.labels.max() >= self.num_classes):
            raise DatasetError(f"labels must lie in [0, {self.num_classes})")

    def __len__(self):
        return len(self.labels)

    @property
    def item_shape(self):
        return tuple(self.images.shape[1:])

    def subset(self, indices, name=None):
        indices = np.asarray(indices, dtype=np.int64)
        return LabeledDataset(self.images[indices], self.labels[indices], self.num_classes, name or self.name)

    def fingerprint(self):
        """sha256 over shape, pixel bytes (float64 LE) and labels (int64 LE)."""
        h = hashlib.sha256()
        h.update(repr((self.images.shape, self.num_classes)).encode())
        h.update(np.ascontiguousarray(self.images, dtype="<f8").tobytes())
        h.update(np.ascontiguousarray(self.labels, dtype="<i8").tobytes())
        return h.hexdigest()


def _read_header(buf, magic, ndims, path):
    need = 4 + 4 * ndims
    if len(buf) < 4:
        raise TruncatedFileError(f"{path}: file shorter than the 4-byte magic")
    (got,) = struct.unpack(">I", buf[:4])
    if got != magic:
        raise BadMagicError(f"{path}: magic 0x{got:08x}, expected 0x{magic:08x}")
    if len(buf) < need:
        raise TruncatedFileError(f"{path}: header truncated")
    return struct.unpack(">" + "I" * ndims, buf[4:need]), need


def load_idx(images_path, labels_path, name=None):
    """Read an IDX image/label pair, scaling pixels by 1/255."""
    img_buf = Path(images_path).read_bytes()
    lab_buf = Path(labels_path).read_bytes()
    (n, rows, cols), off = _read_header(img_buf, IMAGES_MAGIC, 3, images_path)
    (m,), loff = _read_header(lab_buf, LABELS_MAGIC, 1, labels_path)
    if n != m:
        raise CountMismatchError(f"{n} images but {m} labels")
    if len(img_buf) - off < n * rows * cols:
        raise TruncatedFileError(f"{images_path}: expected {n * rows * cols} pixel bytes, found {len(img_buf) - off}")
    if len(lab_buf) - loff < m:
        raise TruncatedFileError(f"{labels_path}: expected {m} label bytes, found {len(lab_buf) - loff}")
    pixels = np.frombuffer(img_buf, dtype=np.uint8, count=n * rows * cols, offset=off)
    labels = np.frombuffer(lab_buf, dtype=np.uint8, count=m, offset=loff).astype(np.int64)
    images = pixels.reshape(n, 1, rows, cols).astype(np.float64) / 255.0
    k = int(labels.max()) + 1 if m else 0
    return LabeledDataset(images, labels, max(k, 1), name or Path(images_path).name)


def save_idx(images_path, labels_path, pixels, labels):
    """Write raw uint8 ``pixels`` [N, H, W] and ``labels`` [N] as an IDX pair."""
    pixels = np.asarray(pixels, dtype=np.uint8)
    labels = np.asarray(labels, dtype=np.uint8)
    n, rows, cols = pixels.shape
    Path(images_path).write_bytes(struct.pack(">IIII", IMAGES_MAGIC, n, rows, cols) + pixels.tobytes())
    Path(labels_path).write_bytes(struct.pack(">II", LABELS_MAGIC, len(labels)) + labels.tobytes())


# Synthetic data: each class has a seeded base pattern on a 4x4-pixel block
# grid, mid-grey +/- CONTRAST/2; samples add uniform noise in [-0.1, 0.1].
CONTRAST = 0.1
NOISE = 0.1
BLOCK = 4


def base_patterns(num_classes, side, seed):
    rng = Xorshift64Star(seed, 1)
    cells = -(-side // BLOCK)
    signs = np.where(rng.uniform(num_classes * cells * cells) < 0.5, -1.0, 1.0)
    signs = signs.reshape(num_classes, cells, cells)
    grid = np.kron(signs, np.ones((BLOCK, BLOCK)))[:, :side, :side]
    return 0.5 + 0.5 * CONTRAST * grid


def generate_synthetic(num_classes=10, per_class=300, side=16, seed=0):
    """Deterministic K-class image set: base pattern per class plus noise, clamped to [0, 1]."""
    if num_classes < 6:
        raise DatasetError("synthetic data needs at least 6 classes so top-5 error is meaningful")
    if side < 8:
        raise DatasetError("image side must be at least 8")
    patterns = base_patterns(num_classes, side, seed)
    labels = np.repeat(np.arange(num_classes), per_class)
    rng = Xorshift64Star(seed, 2)
    noise = rng.uniform(len(labels) * side * side, -NOISE, NOISE).reshape(len(labels), side, side)
    images = np.clip(patterns[labels] + noise, 0.0, 1.0)[:, None]
    return LabeledDataset(images, labels, num_classes, f"synthetic-k{num_classes}-n{per_class}-s{side}-seed{seed}")


@dataclass(frozen=True)
class SplitSpec:
    train: int
    val: int
    test: int
    seed: int = 0


def split(ds, spec):
    """Disjoint train/val/test subsets taken in order from a seeded Fisher-Yates shuffle."""
    total = spec.train + spec.val + spec.test
    if min(spec.train, spec.val, spec.test) < 0:
        raise SplitOverflowError("split counts must be nonnegative")
    if total > len(ds):
        raise SplitOverflowError(f"split asks for {total} items, dataset has {len(ds)}")
    order = Xorshift64Star(spec.seed).permutation(len(ds))
    a, b = spec.train, spec.train + spec.val
    return (ds.subset(order[:a], f"{ds.name}/train"),
            ds.subset(order[a:b], f"{ds.name}/val"),
            ds.subset(order[b:total], f"{ds.name}/test"))


def default_split(ds, seed=0):
    """2/3 train, 1/6 validation, 1/6 test."""
    n = len(ds)
    val = test = n // 6
    return SplitSpec(n - val - test, val, test, seed)
