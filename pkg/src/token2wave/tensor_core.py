"""Dense float64 matrix helpers and small Jacobi eigen/singular-value solvers.

Matrices are plain ``numpy.ndarray`` objects of dtype float64. The helpers
here validate shapes and finiteness at the module boundaries and provide the
two spectral routines the diagnostics need.

Normal sampling uses numpy's ``Generator`` over ``PCG64`` and its ziggurat
``standard_normal``. Both are platform independent, so a seed reproduces
the same stream on every machine running the same numpy release.
"""

from __future__ import annotations

import numpy as np

from .exceptions import DimensionError, ShapeError

SYMMETRY_TOL = 1e-10


def make_rng(seed=None):
    """Return a seeded ``numpy.random.Generator`` (PCG64)."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.Generator(np.random.PCG64(seed))


def as_matrix(x, name="matrix"):
    """Validate ``x`` as a finite 2-D float64 array and return it."""
    a = np.asarray(x, dtype=np.float64)
    if a.ndim != 2:
        raise DimensionError(f"{name} must be 2-D, got shape {a.shape}")
    if a.shape[0] == 0 or a.shape[1] == 0:
        raise DimensionError(f"{name} has a zero dimension: {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} contains NaN or Inf")
    return a


def randn(rows, cols, rng):
    """I.i.d. standard normal ``rows x cols`` matrix, drawn in row-major order."""
    if rows < 1 or cols < 1:
        raise DimensionError(f"randn needs positive dimensions, got ({rows}, {cols})")
    return make_rng(rng).standard_normal((rows, cols))


def matmul(a, b):
    a = as_matrix(a, "a")
    b = as_matrix(b, "b")
    if a.shape[1] != b.shape[0]:
        raise DimensionError(f"cannot multiply {a.shape} by {b.shape}")
    return a @ b


def _round_robin(m):
    """Yield rounds of disjoint index pairs covering every pair of ``range(m)`` once.

    Odd ``m`` gets a dummy player ``m`` whose pairs are dropped.
    """
    players = list(range(m + (m % 2)))
    size = len(players)
    for _ in range(size - 1):
        p, q = [], []
        for i in range(size // 2):
            a, b = players[i], players[size - 1 - i]
            if a < m and b < m:
                p.append(min(a, b))
                q.append(max(a, b))
        yield np.array(p, dtype=np.intp), np.array(q, dtype=np.intp)
        players = [players[0], players[-1]] + players[1:-1]


def _off_norm(a):
    off = a - np.diag(np.diag(a))
    return np.sqrt(np.sum(off * off))


def sym_eigh(m, tol=1e-15, max_sweeps=60):
    """Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.

    Each sweep visits all index pairs in round-robin order; the pairs within
    a round are disjoint, so their rotations are applied together.

    Returns ``(eigenvalues, eigenvectors)`` with eigenvalues ascending and
    eigenvectors as columns.
    """
    a = as_matrix(m, "m").copy()
    n = a.shape[0]
    if a.shape[1] != n:
        raise ShapeError(f"matrix must be square, got {a.shape}")
    if np.max(np.abs(a - a.T)) > SYMMETRY_TOL:
        raise ShapeError("matrix is not symmetric within 1e-10")
    a = 0.5 * (a + a.T)
    v = np.eye(n)
    scale = np.linalg.norm(a)
    if n > 1 and scale > 0:
        for _ in range(max_sweeps):
            if _off_norm(a) <= tol * scale:
                break
            for p, q in _round_robin(n):
                apq = a[p, q]
                active = np.abs(apq) > 1e-18 * scale
                if not np.any(active):
                    continue
                p, q, apq = p[active], q[active], apq[active]
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                t = np.sign(theta) / (np.abs(theta) + np.hypot(theta, 1.0))
                t[theta == 0] = 1.0
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                ap, aq = a[:, p].copy(), a[:, q].copy()
                a[:, p] = c * ap - s * aq
                a[:, q] = s * ap + c * aq
                ap, aq = a[p, :].copy(), a[q, :].copy()
                a[p, :] = c[:, None] * ap - s[:, None] * aq
                a[q, :] = s[:, None] * ap + c[:, None] * aq
                vp, vq = v[:, p].copy(), v[:, q].copy()
                v[:, p] = c * vp - s * vq
                v[:, q] = s * vp + c * vq
    w = np.diag(a).copy()
    order = np.argsort(w, kind="stable")
    return w[order], v[:, order]


def sym_eigvals(m):
    """Ascending eigenvalues of a symmetric matrix."""
    return sym_eigh(m)[0]


def singular_values(m, tol=1e-15, max_sweeps=60):
    """Singular values (descending) by one-sided Jacobi orthogonalisation.

    Works on the columns of the thinner orientation. Unlike the Gram-matrix
    route this keeps small singular values accurate relative to the largest,
    which matters when the matrix is rank deficient.
    """
    x = as_matrix(m, "m")
    if x.shape[1] > x.shape[0]:
        x = x.T
    x = x.copy()
    k = x.shape[1]
    if k > 1:
        for _ in range(max_sweeps):
            rotated = False
            for p, q in _round_robin(k):
                xp, xq = x[:, p], x[:, q]
                alpha = np.sum(xp * xp, axis=0)
                beta = np.sum(xq * xq, axis=0)
                gamma = np.sum(xp * xq, axis=0)
                active = np.abs(gamma) > tol * np.sqrt(alpha * beta)
                if not np.any(active):
                    continue
                rotated = True
                p, q = p[active], q[active]
                alpha, beta, gamma = alpha[active], beta[active], gamma[active]
                with np.errstate(over="ignore", divide="ignore"):
                    # an overflowing zeta means a negligible rotation: t -> 0
                    zeta = (beta - alpha) / (2.0 * gamma)
                    t = np.sign(zeta) / (np.abs(zeta) + np.hypot(zeta, 1.0))
                t[zeta == 0] = 1.0
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = c * t
                xp, xq = x[:, p].copy(), x[:, q].copy()
                x[:, p] = c * xp - s * xq
                x[:, q] = s * xp + c * xq
            if not rotated:
                break
    return np.sort(np.linalg.norm(x, axis=0))[::-1]
