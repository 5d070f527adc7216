"""Datasets: IDX-format digit loading, a synthetic task for the toy model,
and deterministic subset selection.

IDX layout (all integers big-endian): a 4-byte magic (2051 for rank-3
image files, 2049 for rank-1 label files), one 4-byte extent per dimension,
then the raw uint8 payload.  Files may be gzip-compressed; the loader
sniffs the two-byte gzip signature.  Malformed files raise IdxFormatError
naming the file and the byte offset of the problem.
"""

from __future__ import annotations

import gzip
import os
import struct
from dataclasses import dataclass

import numpy as np

from .seeding import NS_SUBSET, NS_TOY, rng_for

__all__ = [
    "IdxFormatError",
    "Dataset",
    "read_idx",
    "load_mnist",
    "synthetic_toy_sample",
    "toy_dataset",
    "subset",
    "MNIST_FILES",
]

_MAGIC_IMAGES = 2051
_MAGIC_LABELS = 2049

MNIST_FILES = {
    ("train", "images"): "train-images-idx3-ubyte",
    ("train", "labels"): "train-labels-idx1-ubyte",
    ("test", "images"): "t10k-images-idx3-ubyte",
    ("test", "labels"): "t10k-labels-idx1-ubyte",
}

TOY_IN = 10
TOY_CLASSES = 5


class IdxFormatError(ValueError):
    """An IDX file is malformed (bad magic, rank, or truncated payload)."""


@dataclass
class Dataset:
    """x: (N, features) float64; y: (N, classes) one-hot float64."""

    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        if self.x.shape[0] != self.y.shape[0]:
            raise ValueError(
                f"example counts disagree: {self.x.shape[0]} inputs vs "
                f"{self.y.shape[0]} targets"
            )

    def __len__(self) -> int:
        return self.x.shape[0]

    def take(self, indices) -> "Dataset":
        return Dataset(self.x[indices], self.y[indices])


def read_idx(path: str) -> np.ndarray:
    """Parse one IDX file (optionally gzipped) into a uint8 array."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:2] == b"\x1f\x8b":
        try:
            raw = gzip.decompress(raw)
        except OSError as exc:
            raise IdxFormatError(f"{path}: gzip payload is corrupt ({exc})") from exc
    if len(raw) < 4:
        raise IdxFormatError(
            f"{path}: file ends at byte {len(raw)}, magic needs bytes 0..3"
        )
    (magic,) = struct.unpack(">i", raw[:4])
    if magic == _MAGIC_IMAGES:
        rank = 3
    elif magic == _MAGIC_LABELS:
        rank = 1
    else:
        raise IdxFormatError(
            f"{path}: bad magic {magic} at byte offset 0 "
            f"(expected {_MAGIC_LABELS} for labels or {_MAGIC_IMAGES} for images)"
        )
    header_end = 4 + 4 * rank
    if len(raw) < header_end:
        raise IdxFormatError(
            f"{path}: file ends at byte {len(raw)}, dimension header needs "
            f"bytes 4..{header_end - 1}"
        )
    dims = struct.unpack(f">{rank}i", raw[4:header_end])
    if any(d < 0 for d in dims):
        raise IdxFormatError(f"{path}: negative extent in header: {dims}")
    expected = header_end + int(np.prod(dims))
    if len(raw) != expected:
        raise IdxFormatError(
            f"{path}: payload for dimensions {dims} should end at byte "
            f"{expected}, file has {len(raw)} bytes"
        )
    return np.frombuffer(raw, dtype=np.uint8, offset=header_end).reshape(dims)


def _resolve(data_dir: str, name: str) -> str:
    for candidate in (name, name + ".gz"):
        path = os.path.join(data_dir, candidate)
        if os.path.exists(path):
            return path
    raise FileNotFoundError(
        f"dataset file {name}[.gz] not found under {data_dir!r}"
    )


def load_mnist(data_dir: str, split: str) -> Dataset:
    """Load one split ('train' or 'test') as flat [0,1] images and one-hot
    labels.  Images come out (N, rows*cols); convolutional models reshape
    per batch."""
    if split not in ("train", "test"):
        raise ValueError(f"split must be 'train' or 'test', got {split!r}")
    images = read_idx(_resolve(data_dir, MNIST_FILES[(split, "images")]))
    labels = read_idx(_resolve(data_dir, MNIST_FILES[(split, "labels")]))
    if images.ndim != 3:
        raise IdxFormatError(f"image file for {split} has rank {images.ndim}, want 3")
    if labels.ndim != 1:
        raise IdxFormatError(f"label file for {split} has rank {labels.ndim}, want 1")
    if images.shape[0] != labels.shape[0]:
        raise IdxFormatError(
            f"{split}: {images.shape[0]} images but {labels.shape[0]} labels"
        )
    if labels.size and labels.max() > 9:
        raise IdxFormatError(f"{split}: label {int(labels.max())} outside 0..9")
    x = images.reshape(images.shape[0], -1).astype(np.float64) / 255.0
    y = np.zeros((labels.shape[0], 10))
    y[np.arange(labels.shape[0]), labels] = 1.0
    return Dataset(x, y)


# ---------------------------------------------------------------------------
# synthetic task for the toy model: a fixed random linear teacher labels
# standard-normal inputs; learnable, classification-shaped, reproducible


def _teacher(seed: int) -> np.ndarray:
    return rng_for(seed, NS_TOY, 0).standard_normal((TOY_CLASSES, TOY_IN))


def synthetic_toy_sample(seed: int, index: int):
    """Example number `index` of the synthetic stream for this seed."""
    if index < 0:
        raise ValueError(f"need index >= 0, got {index}")
    x = rng_for(seed, NS_TOY, 1 + index).standard_normal(TOY_IN)
    label = int(np.argmax(_teacher(seed) @ x))
    y = np.zeros(TOY_CLASSES)
    y[label] = 1.0
    return x, y


def toy_dataset(seed: int, n: int, start: int = 0) -> Dataset:
    """Examples start .. start+n-1 of the synthetic stream (order matches
    synthetic_toy_sample indices).  Disjoint ranges of one seed share the
    teacher, giving a train/test pair with a common ground truth."""
    if n < 0:
        raise ValueError(f"need n >= 0, got {n}")
    xs = np.zeros((n, TOY_IN))
    ys = np.zeros((n, TOY_CLASSES))
    for i in range(n):
        xs[i], ys[i] = synthetic_toy_sample(seed, start + i)
    return Dataset(xs, ys)


def subset(dataset: Dataset, n: int, seed: int) -> Dataset:
    """n examples drawn without replacement in a seeded order."""
    if not 0 <= n <= len(dataset):
        raise ValueError(f"cannot take {n} of {len(dataset)} examples")
    order = rng_for(seed, NS_SUBSET).permutation(len(dataset))
    return dataset.take(order[:n])
