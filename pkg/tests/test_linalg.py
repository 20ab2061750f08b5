import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tprop.errors import DimensionMismatch, InvalidRange
from tprop.linalg import (
    as_matrix,
    batched_symmetric_eigenvalues,
    orthogonal_init,
    symmetric_eigenvalues,
    symmetrize,
    trace_product,
    uniform_init,
)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 12), st.integers(1, 12), st.integers(0, 2**32 - 1))
def test_orthogonal_init_has_orthonormal_rows_or_columns(rows, cols, seed):
    w = orthogonal_init(rows, cols, np.random.default_rng(seed))
    assert w.shape == (rows, cols)
    gram = w @ w.T if rows <= cols else w.T @ w
    np.testing.assert_allclose(gram, np.eye(min(rows, cols)), atol=1e-12)


def test_orthogonal_init_is_seed_deterministic():
    a = orthogonal_init(5, 7, np.random.default_rng(3))
    b = orthogonal_init(5, 7, np.random.default_rng(3))
    assert a.tobytes() == b.tobytes()


def test_orthogonal_init_rejects_empty_shape():
    with pytest.raises(DimensionMismatch):
        orthogonal_init(0, 3, np.random.default_rng(0))


def test_uniform_init_range_and_error():
    w = uniform_init(50, 40, -0.01, 0.01, np.random.default_rng(0))
    assert w.shape == (50, 40)
    assert w.min() >= -0.01 and w.max() < 0.01
    with pytest.raises(InvalidRange):
        uniform_init(2, 2, 0.5, 0.5, np.random.default_rng(0))


def test_known_symmetric_spectrum():
    np.testing.assert_allclose(symmetric_eigenvalues([[2.0, 1.0], [1.0, 2.0]]), [1.0, 3.0])
    # only the symmetric part matters: [[0, 2], [0, 0]] -> [[0, 1], [1, 0]]
    np.testing.assert_allclose(symmetric_eigenvalues([[0.0, 2.0], [0.0, 0.0]]), [-1.0, 1.0])


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 10), st.integers(0, 2**32 - 1))
def test_eigendecomposition_reconstructs_symmetric_part(n, seed):
    m = np.random.default_rng(seed).standard_normal((n, n))
    vals, vecs = symmetric_eigenvalues(m, eigenvectors=True)
    assert np.all(np.diff(vals) >= 0)
    np.testing.assert_allclose(vecs @ np.diag(vals) @ vecs.T, symmetrize(m), atol=1e-10)
    np.testing.assert_allclose(vecs.T @ vecs, np.eye(n), atol=1e-10)


def test_batched_eigenvalues_match_single():
    stack = np.random.default_rng(1).standard_normal((4, 5, 5))
    batched = batched_symmetric_eigenvalues(stack)
    for m, vals in zip(stack, batched):
        np.testing.assert_allclose(vals, symmetric_eigenvalues(m), atol=1e-12)
    with pytest.raises(DimensionMismatch):
        batched_symmetric_eigenvalues(np.zeros((2, 3, 4)))


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 8), st.integers(1, 8), st.integers(0, 2**32 - 1))
def test_trace_product_matches_explicit_product(n, k, seed):
    rng = np.random.default_rng(seed)
    a, b = rng.standard_normal((n, k)), rng.standard_normal((k, n))
    assert trace_product(a, b) == pytest.approx(np.trace(a @ b), rel=1e-12, abs=1e-12)


def test_shape_errors():
    with pytest.raises(DimensionMismatch):
        trace_product(np.zeros((2, 3)), np.zeros((2, 3)))
    with pytest.raises(DimensionMismatch):
        symmetrize(np.zeros((2, 3)))
    with pytest.raises(DimensionMismatch):
        as_matrix(np.zeros(3))
