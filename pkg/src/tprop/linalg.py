"""Dense double-precision linear algebra helpers.

Matrices and vectors are plain ``numpy.ndarray`` objects of dtype float64.
"""

import numpy as np

from .errors import DimensionMismatch, InvalidRange


def as_matrix(a):
    m = np.asarray(a, dtype=np.float64)
    if m.ndim != 2:
        raise DimensionMismatch(f"expected a 2-D matrix, got shape {m.shape}")
    return m


def orthogonal_init(rows, cols, rng):
    """Random matrix with orthonormal rows (rows <= cols) or columns.

    Built from the QR factorization of a standard-normal matrix, with the
    signs of Q's columns flipped so that R has a positive diagonal.
    """
    if rows < 1 or cols < 1:
        raise DimensionMismatch(f"invalid shape ({rows}, {cols})")
    big, small = max(rows, cols), min(rows, cols)
    a = rng.standard_normal((big, small))
    q, r = np.linalg.qr(a)
    signs = np.sign(np.diag(r))
    signs[signs == 0] = 1.0
    q = q * signs
    return np.ascontiguousarray(q.T if rows < cols else q)


def uniform_init(rows, cols, lo, hi, rng):
    if not lo < hi:
        raise InvalidRange(f"uniform range requires lo < hi, got [{lo}, {hi})")
    return rng.uniform(lo, hi, size=(rows, cols))


def symmetrize(s):
    s = as_matrix(s)
    if s.shape[0] != s.shape[1]:
        raise DimensionMismatch(f"expected a square matrix, got {s.shape}")
    return 0.5 * (s + s.T)


def symmetric_eigenvalues(s, eigenvectors=False):
    """Ascending eigenvalues of the symmetric part of ``s``.

    With ``eigenvectors=True`` returns ``(values, vectors)`` such that
    ``vectors @ diag(values) @ vectors.T`` reconstructs the symmetric part.
    """
    sym = symmetrize(s)
    if eigenvectors:
        return np.linalg.eigh(sym)
    return np.linalg.eigvalsh(sym)


def batched_symmetric_eigenvalues(stack):
    """Eigenvalues of the symmetric part of each matrix in a (k, n, n) stack."""
    stack = np.asarray(stack, dtype=np.float64)
    if stack.ndim != 3 or stack.shape[1] != stack.shape[2]:
        raise DimensionMismatch(f"expected a stack of square matrices, got {stack.shape}")
    return np.linalg.eigvalsh(0.5 * (stack + np.swapaxes(stack, 1, 2)))


def trace_product(a, b):
    """tr(A @ B) computed as sum_ij A_ij B_ji, without forming the product."""
    a, b = as_matrix(a), as_matrix(b)
    if a.shape[1] != b.shape[0] or a.shape[0] != b.shape[1]:
        raise DimensionMismatch(f"cannot take tr(AB) for shapes {a.shape} and {b.shape}")
    return float(np.einsum("ij,ji->", a, b))
