"""Dataset containers: MNIST-style IDX files, CIFAR binaries, synthetic blobs.

Pixels are scaled by 1/255 into [0, 1]; no other preprocessing is applied.
Gzip-compressed files are detected by their magic bytes.
"""

import gzip
import os
import struct
from dataclasses import dataclass

import numpy as np

from .errors import ConsistencyError, FormatError, InvalidSplit, TruncatedFile

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801
CIFAR_PIXELS = 3072


@dataclass
class Dataset:
    inputs: np.ndarray
    labels: np.ndarray
    n_classes: int

    def __post_init__(self):
        if len(self.labels) != len(self.inputs):
            raise ConsistencyError(f"{len(self.inputs)} inputs but {len(self.labels)} labels")
        if len(self.labels) and self.labels.max() >= self.n_classes:
            raise ConsistencyError("label outside class range")

    def __len__(self):
        return len(self.labels)

    @property
    def dim(self):
        return self.inputs.shape[1]

    def take(self, idx):
        return Dataset(self.inputs[idx], self.labels[idx], self.n_classes)

    def head(self, n):
        return self.take(np.arange(min(n, len(self))))


@dataclass
class Split:
    train: Dataset
    validation: Dataset
    test: Dataset | None = None
    train_idx: np.ndarray | None = None
    val_idx: np.ndarray | None = None


def read_bytes(path):
    """File contents, gunzipped when the file starts with the gzip magic."""
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError as exc:
        raise FileNotFoundError(f"cannot read {path}: {exc}") from exc
    if raw[:2] == b"\x1f\x8b":
        try:
            return gzip.decompress(raw)
        except (OSError, EOFError) as exc:
            raise TruncatedFile(f"{path}: corrupt gzip stream") from exc
    return raw


def parse_idx_images(raw):
    if len(raw) < 16:
        raise TruncatedFile("IDX image file truncated in header")
    magic, n, rows, cols = struct.unpack(">IIII", raw[:16])
    if magic != IDX_IMAGES_MAGIC:
        raise FormatError(f"bad IDX image magic 0x{magic:08x}")
    body = raw[16:]
    if len(body) < n * rows * cols:
        raise TruncatedFile("IDX image file truncated")
    pixels = np.frombuffer(body, dtype=np.uint8, count=n * rows * cols)
    return pixels.reshape(n, rows * cols), (rows, cols)


def parse_idx_labels(raw):
    if len(raw) < 8:
        raise TruncatedFile("IDX label file truncated in header")
    magic, n = struct.unpack(">II", raw[:8])
    if magic != IDX_LABELS_MAGIC:
        raise FormatError(f"bad IDX label magic 0x{magic:08x}")
    if len(raw) - 8 < n:
        raise TruncatedFile("IDX label file truncated")
    return np.frombuffer(raw[8:], dtype=np.uint8, count=n)


def _dataset(pixels, labels, n_classes):
    return Dataset(pixels.astype(np.float64) / 255.0, labels.astype(np.int64), n_classes)


def load_idx(images_path, labels_path, n_classes=10):
    pixels, _ = parse_idx_images(read_bytes(images_path))
    labels = parse_idx_labels(read_bytes(labels_path))
    if len(pixels) != len(labels):
        raise ConsistencyError(f"{len(pixels)} images but {len(labels)} labels")
    return _dataset(pixels, labels, n_classes)


def idx_bytes(dataset, shape=(28, 28)):
    """Serialize a dataset back to (image file, label file) IDX bytes."""
    rows, cols = shape
    pixels = np.rint(dataset.inputs * 255.0).astype(np.uint8)
    images = struct.pack(">IIII", IDX_IMAGES_MAGIC, len(dataset), rows, cols) + pixels.tobytes()
    labels = struct.pack(">II", IDX_LABELS_MAGIC, len(dataset)) + dataset.labels.astype(np.uint8).tobytes()
    return images, labels


def parse_cifar(raw, variant=10):
    label_bytes = 1 if variant == 10 else 2
    record = label_bytes + CIFAR_PIXELS
    if variant not in (10, 100):
        raise FormatError(f"unknown CIFAR variant {variant}")
    if len(raw) % record:
        raise FormatError(f"CIFAR-{variant} file length {len(raw)} is not a multiple of {record}")
    recs = np.frombuffer(raw, dtype=np.uint8).reshape(-1, record)
    # CIFAR-100 records carry (coarse, fine); the fine label is used
    return recs[:, label_bytes:], recs[:, label_bytes - 1]


def load_cifar(paths, variant=10):
    if isinstance(paths, (str, os.PathLike)):
        paths = [paths]
    pix, lab = [], []
    for path in paths:
        p, l = parse_cifar(read_bytes(path), variant)
        pix.append(p)
        lab.append(l)
    return _dataset(np.concatenate(pix), np.concatenate(lab), variant)


def cifar_bytes(dataset, variant=10, coarse=None):
    pixels = np.rint(dataset.inputs * 255.0).astype(np.uint8)
    fine = dataset.labels.astype(np.uint8)[:, None]
    if variant == 10:
        head = fine
    else:
        coarse = np.zeros_like(fine) if coarse is None else np.asarray(coarse, dtype=np.uint8)[:, None]
        head = np.hstack([coarse, fine])
    return np.hstack([head, pixels]).tobytes()


def split_train_val(dataset, val_size, rng, test=None):
    """Hold out ``val_size`` random training samples; indices stay sorted."""
    if not 0 <= val_size < len(dataset):
        raise InvalidSplit(f"validation size {val_size} must be in [0, {len(dataset)})")
    perm = rng.permutation(len(dataset))
    val_idx, train_idx = np.sort(perm[:val_size]), np.sort(perm[val_size:])
    return Split(dataset.take(train_idx), dataset.take(val_idx), test, train_idx, val_idx)


def synthetic_blobs(classes, per_class, dim, separation, seed, sigma=1.0):
    """Isotropic Gaussian clusters whose means are ``separation * sigma`` apart.

    With ``dim >= classes`` the means sit on scaled unit vectors; otherwise
    they are spread on a regular polygon in the first two coordinates.
    """
    if classes < 2:
        raise ValueError("need at least two classes")
    rng = np.random.default_rng(seed)
    means = np.zeros((classes, dim))
    if dim >= classes:
        means[np.arange(classes), np.arange(classes)] = separation * sigma / np.sqrt(2.0)
    else:
        if dim < 2:
            raise ValueError("need dim >= 2 when dim < classes")
        angles = 2 * np.pi * np.arange(classes) / classes
        radius = separation * sigma / (2 * np.sin(np.pi / classes))
        means[:, 0], means[:, 1] = radius * np.cos(angles), radius * np.sin(angles)
    labels = np.repeat(np.arange(classes), per_class)
    inputs = means[labels] + sigma * rng.standard_normal((len(labels), dim))
    order = rng.permutation(len(labels))
    return Dataset(inputs[order], labels[order].astype(np.int64), classes)


MNIST_FILES = {
    "train": ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
    "test": ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
}


def _find(directory, name):
    for candidate in (name, name + ".gz"):
        path = os.path.join(directory, candidate)
        if os.path.exists(path):
            return path
    raise FileNotFoundError(f"missing {name} (or {name}.gz) in {directory}")


def load_mnist_dir(directory):
    """Train and test sets of an MNIST or Fashion-MNIST directory."""
    out = {}
    for part, (img, lab) in MNIST_FILES.items():
        out[part] = load_idx(_find(directory, img), _find(directory, lab))
    return out["train"], out["test"]


def load_cifar_dir(directory, variant=10):
    if variant == 10:
        train = [_find(directory, f"data_batch_{i}.bin") for i in range(1, 6)]
        test = [_find(directory, "test_batch.bin")]
    else:
        train, test = [_find(directory, "train.bin")], [_find(directory, "test.bin")]
    return load_cifar(train, variant), load_cifar(test, variant)
