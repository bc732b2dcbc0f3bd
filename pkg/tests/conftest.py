import os
from pathlib import Path

import numpy as np
import pytest
from scipy.stats import ortho_group

from optocnn import cnn, idx
from optocnn.cli import reference_weights_text

ROOT = Path(__file__).resolve().parents[1]
SUBSET_DIR = ROOT / "data" / "mnist-subset"
MNIST_ENV = "OPTOCNN_MNIST_DIR"


def random_orthogonal(n, seed):
    return ortho_group.rvs(n, random_state=seed) if n > 1 else np.array([[1.0]])


def im2col_oracle(img, k, s, p=0):
    """Patches of ``img`` (w, w, c) by explicit window slicing, row-major, each flattened (r, c, ch)."""
    if p:
        img = np.pad(img, ((p, p), (p, p), (0, 0)))
    w = img.shape[0]
    return np.array([
        img[i : i + k, j : j + k, :].ravel() for i in range(0, w - k + 1, s) for j in range(0, w - k + 1, s)
    ])


def conv_oracle(img, kernels, k, s, p):
    """Direct nested-loop convolution, ``img`` (w, w, c), ``kernels`` (d, k, k, c)."""
    if p:
        img = np.pad(img, ((p, p), (p, p), (0, 0)))
    w = img.shape[0]
    out_w = (w - k) // s + 1
    out = np.zeros((out_w, out_w, kernels.shape[0]))
    for i in range(out_w):
        for j in range(out_w):
            window = img[i * s : i * s + k, j * s : j * s + k, :]
            for d in range(kernels.shape[0]):
                out[i, j, d] = np.sum(window * kernels[d])
    return out


def toy_net_oracle(weights, image):
    """Toy network forward pass by direct convolution; kernel rows are (r, c, ch) vectors."""
    x = image.reshape(28, 28, 1)
    x = np.maximum(conv_oracle(x, weights[0].reshape(8, 4, 4, 1), 4, 2, 1), 0)
    x = np.maximum(conv_oracle(x, weights[1].reshape(16, 4, 4, 8), 4, 2, 1), 0)
    x = np.maximum(weights[2] @ x.ravel(), 0)
    return weights[3] @ x


@pytest.fixture(scope="session")
def reference():
    return cnn.weights_from_json(reference_weights_text())


def evaluation_split():
    """(images, labels, source) for the evaluation split: official MNIST if provided, else the bundled proxy."""
    mnist = os.environ.get(MNIST_ENV)
    if mnist:
        found = idx.find_mnist(mnist, "test")
        if found:
            return idx.load_images(found[0]), idx.load_labels(found[1]), f"MNIST test set ({mnist})"
    found = idx.find_mnist(SUBSET_DIR, "test")
    return idx.load_images(found[0]), idx.load_labels(found[1]), "bundled 1000-digit held-out MNIST subset"


@pytest.fixture(scope="session")
def test_data():
    return evaluation_split()


@pytest.fixture(scope="session")
def train_data():
    found = idx.find_mnist(SUBSET_DIR, "train")
    return idx.load_images(found[0]), idx.load_labels(found[1])


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
