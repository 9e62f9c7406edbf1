"""Dense small-matrix kernels.

The eigensolver and Cholesky factorization are written out here rather than
borrowed from LAPACK: the matrices involved (layer weights, copula
correlation matrices) are at most a few dozen rows, and the cyclic Jacobi
method is unconditionally robust for symmetric input of that size.
"""

from __future__ import annotations

import numpy as np

from .exceptions import DimensionError, FactorizationError, ValidationError

__all__ = [
    "face_split",
    "sym_eig",
    "cholesky",
    "nearest_correlation",
    "spectral_norm",
]

SYMMETRY_TOL = 1e-12
JACOBI_TOL = 1e-13
DEGENERATE_DIAG = 1e-10
POWER_ITERATION_WIDTH = 64


def _as_matrix(X, name="matrix"):
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise DimensionError(f"{name} must be two-dimensional, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise ValidationError(f"{name} has non-finite entries")
    return X


def _check_symmetric(S, name="matrix"):
    S = _as_matrix(S, name)
    if S.shape[0] != S.shape[1]:
        raise DimensionError(f"{name} must be square, got shape {S.shape}")
    scale = max(1.0, float(np.max(np.abs(S)))) if S.size else 1.0
    if S.size and np.max(np.abs(S - S.T)) > SYMMETRY_TOL * scale:
        raise ValidationError(f"{name} is not symmetric")
    return S


def face_split(X, Y):
    """Row-wise Kronecker product of two matrices with equal row counts.

    Row ``i`` of the ``m x (n*p)`` result is ``kron(X[i], Y[i])``.
    """
    X = _as_matrix(X, "X")
    Y = _as_matrix(Y, "Y")
    if X.shape[0] != Y.shape[0]:
        raise DimensionError(
            f"face_split needs equal row counts, got {X.shape[0]} and {Y.shape[0]}"
        )
    m = X.shape[0]
    return np.einsum("ij,ik->ijk", X, Y).reshape(m, X.shape[1] * Y.shape[1])


_EPS = np.finfo(float).eps


def sym_eig(S, tol=JACOBI_TOL, max_sweeps=100):
    """Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.

    Parameters
    ----------
    S : array_like, shape (n, n)
        Symmetric matrix (asymmetry above ``1e-12`` relative is rejected).
    tol : float
        Sweeps stop once the off-diagonal Frobenius norm falls below
        ``tol * ||S||_F``.

    Returns
    -------
    eigenvalues : ndarray, shape (n,)
        Ascending.
    eigenvectors : ndarray, shape (n, n)
        Orthonormal columns, ``S = V @ diag(eigenvalues) @ V.T``.
    """
    S = _check_symmetric(S, "S")
    n = S.shape[0]
    A = 0.5 * (S + S.T)
    V = np.eye(n)
    norm = np.linalg.norm(A)
    if n == 0 or norm == 0.0:
        return np.zeros(n), V
    threshold = tol * norm
    for _ in range(max_sweeps):
        off = np.linalg.norm(A - np.diag(np.diag(A)))
        if off < threshold:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p, q]
                if abs(apq) <= _EPS * min(abs(A[p, p]), abs(A[q, q])):
                    A[p, q] = A[q, p] = 0.0
                    continue
                tau = (A[q, q] - A[p, p]) / (2.0 * apq)
                if abs(tau) > 1e150:
                    t = 0.5 / tau
                elif tau >= 0:
                    t = 1.0 / (tau + np.sqrt(1.0 + tau * tau))
                else:
                    t = -1.0 / (-tau + np.sqrt(1.0 + tau * tau))
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = t * c
                col_p = A[:, p].copy()
                col_q = A[:, q].copy()
                A[:, p] = c * col_p - s * col_q
                A[:, q] = s * col_p + c * col_q
                row_p = A[p, :].copy()
                row_q = A[q, :].copy()
                A[p, :] = c * row_p - s * row_q
                A[q, :] = s * row_p + c * row_q
                A[p, q] = A[q, p] = 0.0
                v_p = V[:, p].copy()
                v_q = V[:, q].copy()
                V[:, p] = c * v_p - s * v_q
                V[:, q] = s * v_p + c * v_q
    else:
        raise FactorizationError(f"Jacobi iteration did not converge in {max_sweeps} sweeps")
    w = np.diag(A).copy()
    order = np.argsort(w, kind="stable")
    return w[order], V[:, order]


def cholesky(R):
    """Lower-triangular ``L`` with ``L @ L.T == R`` and positive diagonal.

    Raises
    ------
    FactorizationError
        If a pivot is not strictly positive; ``err.index`` names it.
    """
    R = _check_symmetric(R, "R")
    n = R.shape[0]
    L = np.zeros_like(R)
    for j in range(n):
        row = L[j, :j]
        pivot = R[j, j] - row @ row
        if not pivot > 0.0:
            raise FactorizationError(
                f"matrix is not positive definite: pivot {j} is {pivot:.3e}", index=j
            )
        L[j, j] = np.sqrt(pivot)
        if j + 1 < n:
            L[j + 1 :, j] = (R[j + 1 :, j] - L[j + 1 :, :j] @ row) / L[j, j]
    return L


def nearest_correlation(R, min_eigenvalue=0.0):
    """Repair an indefinite symmetric matrix into a correlation matrix.

    Negative eigenvalues are clipped to ``min_eigenvalue`` and the result is
    rescaled to unit diagonal. Rows whose rescaled diagonal falls below
    ``1e-10`` are replaced by the corresponding unit vector.
    """
    R = _check_symmetric(R, "R")
    n = R.shape[0]
    w, V = sym_eig(R)
    if w.size and w[0] >= min_eigenvalue:
        out = 0.5 * (R + R.T)
    else:
        out = (V * np.maximum(w, min_eigenvalue)) @ V.T
        out = 0.5 * (out + out.T)
    d = np.diag(out).copy()
    degenerate = d < DEGENERATE_DIAG
    scale = np.where(degenerate, 1.0, np.sqrt(np.where(degenerate, 1.0, d)))
    out = out / np.outer(scale, scale)
    out[degenerate, :] = 0.0
    out[:, degenerate] = 0.0
    out[np.arange(n), np.arange(n)] = 1.0
    return out


def spectral_norm(W, power_iterations=500, tol=1e-13, seed=0):
    """Largest singular value of ``W``.

    Computed from the Jacobi eigenvalues of the smaller Gram matrix; power
    iteration takes over once both dimensions exceed 64.
    """
    W = _as_matrix(W, "W")
    if W.size == 0:
        return 0.0
    G = W.T @ W if W.shape[1] <= W.shape[0] else W @ W.T
    if G.shape[0] <= POWER_ITERATION_WIDTH:
        w, _ = sym_eig(0.5 * (G + G.T))
        return float(np.sqrt(max(w[-1], 0.0)))
    v = np.random.default_rng(seed).standard_normal(G.shape[0])
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(power_iterations):
        u = G @ v
        new = float(np.linalg.norm(u))
        if new == 0.0:
            return 0.0
        v = u / new
        if abs(new - lam) <= tol * new:
            lam = new
            break
        lam = new
    return float(np.sqrt(lam))
