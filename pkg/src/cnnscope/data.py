"""Dataset loading: MNIST IDX files and a synthetic Gaussian-blob generator.

The IDX format is big-endian: magic 0x00000803 for image files (rank 3) and
0x00000801 for label files (rank 1), followed by 32-bit dimension sizes and
raw uint8 data.  The synthetic generator produces 28x28 images with one
Gaussian bump per class at a class-specific position, plus jitter and pixel
noise, so a network can be trained end to end without any files.
"""

from __future__ import annotations

import os
import struct

import numpy as np

IMAGE_MAGIC = 0x00000803
LABEL_MAGIC = 0x00000801


def read_idx_images(path: str) -> np.ndarray:
    """Load an IDX image file as float64 [n, h, w, 1] scaled to [0, 1]."""
    with open(path, "rb") as f:
        magic, n, rows, cols = struct.unpack(">IIII", f.read(16))
        if magic != IMAGE_MAGIC:
            raise ValueError(f"{path}: bad image magic 0x{magic:08x}")
        raw = f.read(n * rows * cols)
    if len(raw) != n * rows * cols:
        raise ValueError(f"{path}: truncated image data")
    data = np.frombuffer(raw, dtype=np.uint8).reshape(n, rows, cols, 1)
    return data.astype(np.float64) / 255.0


def read_idx_labels(path: str) -> np.ndarray:
    """Load an IDX label file as int64 [n]."""
    with open(path, "rb") as f:
        magic, n = struct.unpack(">II", f.read(8))
        if magic != LABEL_MAGIC:
            raise ValueError(f"{path}: bad label magic 0x{magic:08x}")
        raw = f.read(n)
    if len(raw) != n:
        raise ValueError(f"{path}: truncated label data")
    return np.frombuffer(raw, dtype=np.uint8).astype(np.int64)


def write_idx_images(path: str, images: np.ndarray) -> None:
    """Write [n, h, w] or [n, h, w, 1] float [0,1] or uint8 images as IDX."""
    arr = np.asarray(images)
    if arr.ndim == 4:
        arr = arr[:, :, :, 0]
    if arr.dtype != np.uint8:
        arr = np.clip(np.rint(arr * 255.0), 0, 255).astype(np.uint8)
    n, rows, cols = arr.shape
    with open(path, "wb") as f:
        f.write(struct.pack(">IIII", IMAGE_MAGIC, n, rows, cols))
        f.write(arr.tobytes())


def write_idx_labels(path: str, labels: np.ndarray) -> None:
    arr = np.asarray(labels).astype(np.uint8)
    with open(path, "wb") as f:
        f.write(struct.pack(">II", LABEL_MAGIC, arr.shape[0]))
        f.write(arr.tobytes())


MNIST_FILES = {
    "train_images": "train-images-idx3-ubyte",
    "train_labels": "train-labels-idx1-ubyte",
    "test_images": "t10k-images-idx3-ubyte",
    "test_labels": "t10k-labels-idx1-ubyte",
}


def mnist_available(directory: str) -> bool:
    return bool(directory) and all(
        os.path.exists(os.path.join(directory, name)) for name in MNIST_FILES.values()
    )


def load_mnist(directory: str, train_limit: int = 0, test_limit: int = 0):
    """Load MNIST IDX files from a directory; limits of 0 mean "all samples"."""
    train_x = read_idx_images(os.path.join(directory, MNIST_FILES["train_images"]))
    train_y = read_idx_labels(os.path.join(directory, MNIST_FILES["train_labels"]))
    test_x = read_idx_images(os.path.join(directory, MNIST_FILES["test_images"]))
    test_y = read_idx_labels(os.path.join(directory, MNIST_FILES["test_labels"]))
    if train_limit:
        train_x, train_y = train_x[:train_limit], train_y[:train_limit]
    if test_limit:
        test_x, test_y = test_x[:test_limit], test_y[:test_limit]
    return train_x, train_y, test_x, test_y


def make_synthetic(
    n: int,
    classes: int = 10,
    size: int = 28,
    seed: int = 0,
    noise: float = 0.08,
    jitter: int = 2,
):
    """Gaussian-blob images: class c is a pair of bumps in a class-specific
    arrangement (position on a ring plus a class-dependent satellite), so the
    classes are well separated yet not linearly trivial.

    Samples get a random integer shift of up to +/-jitter pixels, an amplitude
    factor in [0.8, 1.2] and additive pixel noise, then clip to [0, 1].
    Returns (images [n, size, size, 1] float64, labels [n] int64).
    """
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    angles = 2.0 * np.pi * np.arange(classes) / classes
    radius = size * 0.30
    cy = size / 2.0 + radius * np.sin(angles)
    cx = size / 2.0 + radius * np.cos(angles)
    # satellite bump on the opposite side, offset differently per class
    sy = size / 2.0 - 0.45 * radius * np.sin(angles + 0.7)
    sx = size / 2.0 - 0.45 * radius * np.cos(angles + 0.7)
    sigma = size / 10.0

    labels = rng.integers(0, classes, n)
    shifts = rng.integers(-jitter, jitter + 1, (n, 2))
    amps = rng.uniform(0.8, 1.2, n)
    images = np.empty((n, size, size, 1), dtype=np.float64)
    for i in range(n):
        c = labels[i]
        dy = yy - (cy[c] + shifts[i, 0])
        dx = xx - (cx[c] + shifts[i, 1])
        bump = np.exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma))
        dy = yy - (sy[c] + shifts[i, 0])
        dx = xx - (sx[c] + shifts[i, 1])
        bump = bump + 0.8 * np.exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma))
        images[i, :, :, 0] = amps[i] * bump
    images += rng.normal(0.0, noise, images.shape)
    np.clip(images, 0.0, 1.0, out=images)
    return images, labels.astype(np.int64)
