"""Cyclic Jacobi eigensolver for small dense symmetric matrices."""

from __future__ import annotations

import math

import numpy as np

from ncnum._jit import njit
from ncnum.errors import NoConvergence, NotSymmetric

__all__ = ["eig_sym", "project_psd", "min_eig", "SYMMETRY_TOL"]

SYMMETRY_TOL = 1e-12
MAX_SWEEPS = 100
OFF_TOL = 1e-12


@njit
def jacobi_eig(A, tol, max_sweeps):
    """Eigenvalues (unsorted) and eigenvectors of symmetric ``A``.

    Returns ``(w, V, sweeps)``; ``sweeps`` is -1 when the cap was hit.  The
    stopping test is on the off-diagonal Frobenius norm relative to ``||A||_F``.
    """
    n = A.shape[0]
    a = A.copy()
    V = np.eye(n)
    scale = 0.0
    for i in range(n):
        for j in range(n):
            scale += a[i, j] * a[i, j]
    scale = math.sqrt(scale)
    if scale == 0.0:
        return np.zeros(n), V, 0
    for sweep in range(max_sweeps + 1):
        off = 0.0
        for p in range(n):
            for q in range(p + 1, n):
                off += a[p, q] * a[p, q]
        if math.sqrt(2.0 * off) <= tol * scale:
            w = np.empty(n)
            for i in range(n):
                w[i] = a[i, i]
            return w, V, sweep
        if sweep == max_sweeps:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                t = 1.0 / (abs(theta) + math.sqrt(theta * theta + 1.0))
                if theta < 0.0:
                    t = -t
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                for k in range(n):
                    akp = a[k, p]
                    akq = a[k, q]
                    a[k, p] = c * akp - s * akq
                    a[k, q] = s * akp + c * akq
                for k in range(n):
                    apk = a[p, k]
                    aqk = a[q, k]
                    a[p, k] = c * apk - s * aqk
                    a[q, k] = s * apk + c * aqk
                a[p, q] = 0.0
                a[q, p] = 0.0
                for k in range(n):
                    vkp = V[k, p]
                    vkq = V[k, q]
                    V[k, p] = c * vkp - s * vkq
                    V[k, q] = s * vkp + c * vkq
    w = np.empty(n)
    for i in range(n):
        w[i] = a[i, i]
    return w, V, -1


@njit
def psd_clamp(A, tol, max_sweeps):
    """Nearest PSD matrix in Frobenius norm; also returns the minimum eigenvalue."""
    w, V, sweeps = jacobi_eig(A, tol, max_sweeps)
    n = A.shape[0]
    out = np.zeros((n, n))
    wmin = np.inf
    for k in range(n):
        if w[k] < wmin:
            wmin = w[k]
        if w[k] <= 0.0:
            continue
        for i in range(n):
            vi = w[k] * V[i, k]
            for j in range(n):
                out[i, j] += vi * V[j, k]
    for i in range(n):
        for j in range(i + 1, n):
            s = 0.5 * (out[i, j] + out[j, i])
            out[i, j] = s
            out[j, i] = s
    return out, wmin, sweeps


@njit
def min_eig_kernel(A, tol, max_sweeps):
    w, _, sweeps = jacobi_eig(A, tol, max_sweeps)
    return w.min(), sweeps


def _as_symmetric(M) -> np.ndarray:
    A = np.array(M, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise NotSymmetric(f"expected a square matrix, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise NotSymmetric("matrix has non-finite entries")
    asym = np.max(np.abs(A - A.T)) if A.size else 0.0
    if asym > SYMMETRY_TOL * max(1.0, np.max(np.abs(A))):
        raise NotSymmetric(f"matrix is not symmetric (max |A - A^T| = {asym:.3g})")
    return 0.5 * (A + A.T)


def eig_sym(M, *, method: str = "jacobi", tol: float = OFF_TOL,
            max_sweeps: int = MAX_SWEEPS) -> tuple[np.ndarray, np.ndarray]:
    """Eigen-decomposition of a symmetric matrix.

    Parameters
    ----------
    M : array_like, shape (n, n)
        Symmetric to within ``1e-12`` (relative to its largest entry).
    method : {"jacobi", "lapack"}
        ``"jacobi"`` uses the cyclic Jacobi kernel; ``"lapack"`` defers to
        :func:`numpy.linalg.eigh` and is meant for larger matrices.

    Returns
    -------
    w : ndarray
        Eigenvalues in descending order.
    V : ndarray
        Orthonormal eigenvectors as columns, ``M = V diag(w) V^T``.

    Raises
    ------
    NotSymmetric
    NoConvergence
        The Jacobi sweep cap was reached.
    """
    A = _as_symmetric(M)
    if A.shape[0] == 0:
        return np.zeros(0), np.zeros((0, 0))
    if method == "lapack":
        w, V = np.linalg.eigh(A)
    elif method == "jacobi":
        w, V, sweeps = jacobi_eig(A, tol, max_sweeps)
        if sweeps < 0:
            raise NoConvergence(f"Jacobi did not converge in {max_sweeps} sweeps")
    else:
        raise ValueError(f"unknown method {method!r}")
    order = np.argsort(-w, kind="stable")
    return w[order], V[:, order]


def min_eig(M, *, method: str = "jacobi") -> float:
    return float(eig_sym(M, method=method)[0][-1])


def project_psd(M, *, method: str = "jacobi") -> np.ndarray:
    """Frobenius-nearest positive semidefinite matrix (negative eigenvalues clamped)."""
    w, V = eig_sym(M, method=method)
    P = (V * np.maximum(w, 0.0)) @ V.T
    return 0.5 * (P + P.T)
