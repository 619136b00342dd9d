import os

import numpy as np
import pytest

from cnnscope.network import Conv, Dense, MaxPool, Network, NetworkSpec, SoftmaxOutput


def toy_spec(classes: int = 4) -> NetworkSpec:
    """8x8 input, 2+2 filters, dense 16: small enough for finite differences."""
    return NetworkSpec(
        layers=(Conv(2, 3), MaxPool(2), Conv(2, 3), Dense(16), SoftmaxOutput(classes)),
        input_shape=(8, 8, 1),
    )


@pytest.fixture
def toy_net() -> Network:
    return Network.from_spec(toy_spec(), seed=3)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(42)


def mnist_dir() -> str | None:
    """Directory with real MNIST IDX files, if the environment provides one."""
    path = os.environ.get("CNNSCOPE_MNIST_DIR", "")
    from cnnscope.data import mnist_available

    return path if path and mnist_available(path) else None
