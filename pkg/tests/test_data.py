import struct

import numpy as np
import pytest

from cnnscope.data import (
    load_mnist,
    make_synthetic,
    mnist_available,
    read_idx_images,
    read_idx_labels,
    write_idx_images,
    write_idx_labels,
)


class TestIdxRoundtrip:
    def test_images_roundtrip(self, tmp_path, rng):
        imgs = rng.integers(0, 256, (7, 5, 5)).astype(np.uint8)
        path = str(tmp_path / "imgs")
        write_idx_images(path, imgs)
        back = read_idx_images(path)
        assert back.shape == (7, 5, 5, 1)
        np.testing.assert_allclose(back[:, :, :, 0] * 255.0, imgs, atol=1e-9)

    def test_labels_roundtrip(self, tmp_path):
        labels = np.array([0, 3, 9, 1], dtype=np.int64)
        path = str(tmp_path / "labels")
        write_idx_labels(path, labels)
        np.testing.assert_array_equal(read_idx_labels(path), labels)

    def test_image_magic_is_big_endian_0x803(self, tmp_path):
        path = str(tmp_path / "imgs")
        write_idx_images(path, np.zeros((1, 2, 2), dtype=np.uint8))
        with open(path, "rb") as f:
            magic = struct.unpack(">I", f.read(4))[0]
        assert magic == 0x00000803

    def test_label_magic_is_big_endian_0x801(self, tmp_path):
        path = str(tmp_path / "labels")
        write_idx_labels(path, np.zeros(3, dtype=np.uint8))
        with open(path, "rb") as f:
            magic = struct.unpack(">I", f.read(4))[0]
        assert magic == 0x00000801

    def test_bad_magic_rejected(self, tmp_path):
        path = str(tmp_path / "bogus")
        with open(path, "wb") as f:
            f.write(struct.pack(">IIII", 0xDEADBEEF, 1, 2, 2) + b"\x00" * 4)
        with pytest.raises(ValueError, match="magic"):
            read_idx_images(path)

    def test_truncated_rejected(self, tmp_path):
        path = str(tmp_path / "short")
        with open(path, "wb") as f:
            f.write(struct.pack(">IIII", 0x803, 2, 4, 4) + b"\x00" * 5)
        with pytest.raises(ValueError, match="truncated"):
            read_idx_images(path)

    def test_full_mnist_layout(self, tmp_path, rng):
        # synthesize a tiny 4-file MNIST directory and load it back
        for name, n in [("train-images-idx3-ubyte", 20), ("t10k-images-idx3-ubyte", 8)]:
            write_idx_images(str(tmp_path / name), rng.integers(0, 256, (n, 28, 28)).astype(np.uint8))
        write_idx_labels(str(tmp_path / "train-labels-idx1-ubyte"), rng.integers(0, 10, 20))
        write_idx_labels(str(tmp_path / "t10k-labels-idx1-ubyte"), rng.integers(0, 10, 8))
        assert mnist_available(str(tmp_path))
        tx, ty, ex, ey = load_mnist(str(tmp_path), train_limit=10)
        assert tx.shape == (10, 28, 28, 1) and ty.shape == (10,)
        assert ex.shape == (8, 28, 28, 1) and ey.shape == (8,)


class TestSynthetic:
    def test_shapes_and_ranges(self):
        x, y = make_synthetic(50, seed=1)
        assert x.shape == (50, 28, 28, 1)
        assert y.shape == (50,)
        assert x.min() >= 0 and x.max() <= 1
        assert set(np.unique(y)) <= set(range(10))

    def test_deterministic(self):
        a = make_synthetic(20, seed=7)
        b = make_synthetic(20, seed=7)
        np.testing.assert_array_equal(a[0], b[0])
        np.testing.assert_array_equal(a[1], b[1])

    def test_seeds_differ(self):
        a = make_synthetic(20, seed=7)
        b = make_synthetic(20, seed=8)
        assert not np.array_equal(a[0], b[0])

    def test_learnable_by_linear_probe(self):
        # class means should classify most samples: sanity that blobs separate
        x, y = make_synthetic(500, seed=2)
        flat = x.reshape(500, -1)
        means = np.stack([flat[y == c].mean(axis=0) for c in range(10)])
        preds = np.argmax(flat @ means.T, axis=1)
        assert (preds == y).mean() > 0.9
