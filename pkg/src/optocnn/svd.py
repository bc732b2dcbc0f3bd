"""One-sided (Hestenes) Jacobi singular value decomposition."""

from __future__ import annotations

import numpy as np
from numba import njit

from .errors import ConvergenceFailure

MAX_SWEEPS = 100
ROTATION_TOL = 1e-12


@njit(cache=True, nogil=True)
def _jacobi_sweep(a, j, tol):
    """Orthogonalize the columns of ``a`` pairwise, accumulating rotations in ``j``.

    Returns the number of rotations applied.
    """
    m, n = a.shape
    rotations = 0
    for p in range(n - 1):
        for q in range(p + 1, n):
            alpha = 0.0
            beta = 0.0
            gamma = 0.0
            for k in range(m):
                alpha += a[k, p] * a[k, p]
                beta += a[k, q] * a[k, q]
                gamma += a[k, p] * a[k, q]
            if alpha == 0.0 or beta == 0.0 or abs(gamma) <= tol * np.sqrt(alpha * beta):
                continue
            rotations += 1
            zeta = (beta - alpha) / (2.0 * gamma)
            t = (1.0 if zeta >= 0 else -1.0) / (abs(zeta) + np.sqrt(1.0 + zeta * zeta))
            c = 1.0 / np.sqrt(1.0 + t * t)
            s = c * t
            for k in range(m):
                x = a[k, p]
                y = a[k, q]
                a[k, p] = c * x - s * y
                a[k, q] = s * x + c * y
            for k in range(n):
                x = j[k, p]
                y = j[k, q]
                j[k, p] = c * x - s * y
                j[k, q] = s * x + c * y
    return rotations


def _complete_basis(q: np.ndarray, m: int) -> np.ndarray:
    # extend orthonormal columns q (m x r) to an m x m orthogonal matrix
    r = q.shape[1]
    if r == m:
        return q
    full, _ = np.linalg.qr(q, mode="complete") if r else (np.eye(m), None)
    return np.hstack([q, full[:, r:]])


def _column_svd(a: np.ndarray, max_sweeps: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """For tall ``a`` (m x n, m >= n): ``a = Q diag(sigma) J^T`` with Q m x m, J n x n."""
    m, n = a.shape
    work = np.array(a, dtype=np.float64, order="C")
    j = np.eye(n)
    for _ in range(max_sweeps):
        if _jacobi_sweep(work, j, ROTATION_TOL) == 0:
            break
    else:
        raise ConvergenceFailure(f"Jacobi SVD did not converge in {max_sweeps} sweeps")
    sigma = np.linalg.norm(work, axis=0)
    order = np.argsort(-sigma, kind="stable")
    sigma, work, j = sigma[order], work[:, order], j[:, order]
    nonzero = sigma > sigma[0] * 1e-15 if n and sigma[0] > 0 else np.zeros(n, dtype=bool)
    rank = int(np.count_nonzero(nonzero))
    q = _complete_basis(work[:, :rank] / sigma[:rank], m)
    sigma[rank:] = 0.0
    return q, sigma, j


def jacobi_svd(m, max_sweeps: int = MAX_SWEEPS) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Full SVD ``m = u @ S @ v`` with ``S`` the ``rows x cols`` diagonal of ``sigma``.

    ``u`` (rows x rows) and ``v`` (cols x cols) are orthogonal; ``sigma`` has
    ``min(rows, cols)`` entries sorted non-increasing. Note ``v`` is returned in
    the orientation that multiplies from the right (no transpose needed).
    """
    m = np.asarray(m, dtype=np.float64)
    rows, cols = m.shape
    if rows <= cols:
        q, sigma, j = _column_svd(m.T, max_sweeps)  # m^T = q S j^T
        return j, sigma, q.T
    q, sigma, j = _column_svd(m, max_sweeps)
    return q, sigma, j.T


def embed_sigma(sigma: np.ndarray, rows: int, cols: int) -> np.ndarray:
    s = np.zeros((rows, cols))
    s[np.arange(sigma.size), np.arange(sigma.size)] = sigma
    return s
