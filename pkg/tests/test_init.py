"""Orthogonal initialization properties."""

import numpy as np

from fundusdl.engine import orthogonal


def test_rows_orthonormal_wide():
    w = orthogonal((4, 8), np.random.default_rng(0), dtype=np.float64)
    np.testing.assert_allclose(w @ w.T, np.eye(4), atol=1e-5)


def test_columns_orthonormal_tall():
    w = orthogonal((8, 4), np.random.default_rng(0), dtype=np.float64)
    np.testing.assert_allclose(w.T @ w, np.eye(4), atol=1e-5)


def test_singular_values_small_scale():
    w = orthogonal((32, 64), np.random.default_rng(1), dtype=np.float64)
    s = np.linalg.svd(w, compute_uv=False)
    np.testing.assert_allclose(s, 1.0, atol=1e-4)


def test_singular_values_dense_layer_scale():
    w = orthogonal((1024, 2048), np.random.default_rng(2), dtype=np.float32)
    s = np.linalg.svd(w.astype(np.float64), compute_uv=False)
    np.testing.assert_allclose(s, 1.0, atol=1e-4)


def test_conv_weight_flattens_orthonormal():
    w = orthogonal((32, 3, 4, 4), np.random.default_rng(3), dtype=np.float64)
    flat = w.reshape(32, -1)
    np.testing.assert_allclose(flat @ flat.T, np.eye(32), atol=1e-5)


def test_different_seeds_differ():
    a = orthogonal((4, 8), np.random.default_rng(0))
    b = orthogonal((4, 8), np.random.default_rng(1))
    assert np.abs(a - b).max() > 0.01


def test_same_seed_bit_identical():
    a = orthogonal((6, 6), np.random.default_rng(42))
    b = orthogonal((6, 6), np.random.default_rng(42))
    assert a.tobytes() == b.tobytes()
