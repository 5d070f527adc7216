"""Shared fixtures: backend switching and the optional MNIST directory."""

import os

import numpy as np
import pytest

from eqprop import ops

MNIST_FILES = (
    "train-images-idx3-ubyte",
    "train-labels-idx1-ubyte",
    "t10k-images-idx3-ubyte",
    "t10k-labels-idx1-ubyte",
)


@pytest.fixture(params=ops.available_backends())
def backend(request):
    """Run the test once per compute backend, restoring the default after."""
    previous = ops.backend_name()
    ops.set_backend(request.param)
    yield request.param
    ops.set_backend(previous)


@pytest.fixture(scope="session")
def mnist_dir():
    """Directory with the four IDX files, or None when unavailable.

    Tests decide how to skip so each can print its own verdict line first.
    """
    root = os.environ.get("EQPROP_DATA_DIR", "")
    if not root or not os.path.isdir(root):
        return None
    for name in MNIST_FILES:
        if not (
            os.path.exists(os.path.join(root, name))
            or os.path.exists(os.path.join(root, name + ".gz"))
        ):
            return None
    return root


def rand(rng, *shape, scale=1.0):
    return scale * rng.standard_normal(shape)


def assert_close(a, b, tol, label=""):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    gap = float(np.max(np.abs(a - b))) if a.size else 0.0
    assert gap <= tol, f"{label}: max abs gap {gap:g} > {tol:g}"
