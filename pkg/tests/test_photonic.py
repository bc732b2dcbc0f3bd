import numpy as np
import pytest

from conftest import conv_oracle
from optocnn import cnn
from optocnn.errors import ConvergenceFailure, DimensionMismatch
from optocnn.photonic import KernelFactors, Nonlinearity, apply_layer, factor_kernel, realize_kernel
from optocnn.reck import PhaseNoiseModel
from optocnn.svd import embed_sigma, jacobi_svd


@pytest.mark.parametrize("shape", [(1, 1), (1, 5), (5, 1), (3, 3), (8, 16), (16, 8), (10, 49), (64, 20)])
def test_jacobi_svd(shape):
    m = np.random.default_rng(sum(shape)).normal(size=shape)
    u, sigma, v = jacobi_svd(m)
    assert np.allclose(u.T @ u, np.eye(shape[0]), atol=1e-12)
    assert np.allclose(v @ v.T, np.eye(shape[1]), atol=1e-12)
    assert np.all(np.diff(sigma) <= 0)
    assert np.allclose(sigma, np.linalg.svd(m, compute_uv=False), atol=1e-12)
    assert np.max(np.abs(u @ embed_sigma(sigma, *shape) @ v - m)) < 1e-12


def test_jacobi_svd_rank_deficient():
    a = np.random.default_rng(0).normal(size=(6, 2))
    m = a @ a.T[:2]  # rank 2
    m = np.hstack([m, m])
    u, sigma, v = jacobi_svd(m)
    assert np.count_nonzero(sigma) == 2
    assert np.allclose(u.T @ u, np.eye(6), atol=1e-12)
    assert np.max(np.abs(u @ embed_sigma(sigma, *m.shape) @ v - m)) < 1e-12


def test_jacobi_svd_budget():
    with pytest.raises(ConvergenceFailure):
        jacobi_svd(np.random.default_rng(1).normal(size=(20, 20)), max_sweeps=1)


def test_factor_identity():
    f = factor_kernel(np.eye(4))
    assert np.allclose(f.sigma, 1)
    assert np.max(np.abs(f.matrix() - np.eye(4))) < 1e-12


def test_factor_diagonal():
    f = factor_kernel(np.diag([3.0, 2.0]))
    assert f.sigma.tolist() == [3.0, 2.0]
    assert np.max(np.abs(f.matrix() - np.diag([3.0, 2.0]))) < 1e-12


@pytest.mark.parametrize("shape", [(8, 16), (16, 128), (10, 64), (1, 9), (9, 1)])
def test_factor_random(shape):
    m = np.random.default_rng(2).normal(size=shape)
    f = factor_kernel(m)
    assert (f.rows, f.cols) == shape
    assert np.max(np.abs(f.u @ embed_sigma(f.sigma, *shape) @ f.v - m)) < 1e-9
    assert np.max(np.abs(realize_kernel(f, PhaseNoiseModel(0.0, seed=5)) - m)) < 1e-9


def test_factors_json_round_trip():
    m = np.random.default_rng(3).normal(size=(4, 6))
    f = factor_kernel(m)
    g = KernelFactors.from_dict(__import__("json").loads(f.to_json()))
    assert g.u_schedule == f.u_schedule and g.v_schedule == f.v_schedule
    assert np.array_equal(g.sigma, f.sigma)
    assert np.max(np.abs(g.matrix() - m)) < 1e-9


def test_realize_is_deterministic():
    f = factor_kernel(np.random.default_rng(4).normal(size=(6, 12)))
    a = realize_kernel(f, PhaseNoiseModel(1e-3, seed=1))
    assert np.array_equal(a, realize_kernel(f, PhaseNoiseModel(1e-3, seed=1)))
    assert not np.array_equal(a, realize_kernel(f, PhaseNoiseModel(1e-3, seed=2)))


def test_realize_error_shrinks_with_sigma():
    m = np.random.default_rng(5).normal(size=(8, 16))
    f = factor_kernel(m)

    def median_err(sigma):
        return np.median([np.max(np.abs(realize_kernel(f, PhaseNoiseModel(sigma, s)) - m)) for s in range(100)])

    errs = [median_err(s) for s in (1e-2, 1e-3, 1e-4)]
    assert errs[2] > 0
    assert errs[0] > errs[1] > errs[2]
    # first order in sigma: a tenfold reduction gives roughly a tenfold smaller error
    assert 5 < errs[1] / errs[2] < 20


def test_apply_layer_examples():
    m = np.array([[1.0, -1.0], [0.5, 2.0]])
    stream = np.array([[1.0, 2.0], [3.0, 0.0]])
    assert apply_layer(m, stream).tolist() == [[-1.0, 4.5], [3.0, 1.5]]
    assert apply_layer(m, stream, "relu").tolist() == [[0.0, 4.5], [3.0, 1.5]]
    assert np.allclose(apply_layer(np.eye(2), [[0.0, 0.0]], Nonlinearity.SIGMOID), 0.5)
    assert np.allclose(apply_layer(np.eye(2), [[1.0, -1.0]], "tanh"), np.tanh([1.0, -1.0]))


def test_apply_layer_matches_convolution():
    rng = np.random.default_rng(6)
    g = cnn.LayerGeometry(w=9, k=3, s=2, p=1, c=2, d=4)
    img = rng.normal(size=(9, 9, 2))
    kernels = rng.normal(size=(4, 3, 3, 2))
    out = apply_layer(kernels.reshape(4, -1), cnn.extract_patches(img, g))
    expected = conv_oracle(img, kernels, 3, 2, 1)
    assert np.max(np.abs(out.reshape(expected.shape) - expected)) < 1e-12


def test_apply_layer_is_linear_without_nonlinearity():
    rng = np.random.default_rng(7)
    m, a, b = rng.normal(size=(3, 5)), rng.normal(size=(4, 5)), rng.normal(size=(4, 5))
    assert np.allclose(apply_layer(m, 2 * a - b), 2 * apply_layer(m, a) - apply_layer(m, b))


def test_apply_layer_dimension_mismatch():
    with pytest.raises(DimensionMismatch):
        apply_layer(np.eye(3), np.ones((2, 4)))
    with pytest.raises(DimensionMismatch):
        factor_kernel([[np.nan]])
