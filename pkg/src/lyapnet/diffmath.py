"""Small dense linear algebra and scalar calculus helpers.

Everything here works in float64. The softplus family is written so that
it never overflows for finite input.
"""
import math

import numpy as np

PIVOT_TOL = 1e-12


class SingularMatrix(ArithmeticError):
    """Raised when Gaussian elimination meets a pivot below ``PIVOT_TOL``."""


def lu_factor(m):
    """LU factorization with partial pivoting.

    Returns ``(lu, perm)`` where ``lu`` packs the unit lower factor below the
    diagonal and the upper factor on and above it, and ``perm`` is the row
    permutation with ``m[perm] == L @ U``.
    """
    a = np.array(m, dtype=np.float64, copy=True)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError("matrix has non-finite entries")
    n = a.shape[0]
    perm = np.arange(n)
    for k in range(n):
        p = k + int(np.argmax(np.abs(a[k:, k])))
        if abs(a[p, k]) <= PIVOT_TOL:
            raise SingularMatrix(f"pivot {a[p, k]:.3e} in column {k} is below {PIVOT_TOL}")
        if p != k:
            a[[k, p]] = a[[p, k]]
            perm[[k, p]] = perm[[p, k]]
        a[k + 1:, k] /= a[k, k]
        a[k + 1:, k + 1:] -= np.outer(a[k + 1:, k], a[k, k + 1:])
    return a, perm


def lu_solve(lu, perm, b):
    """Solve ``m @ x = b`` from the output of :func:`lu_factor`.

    ``b`` may be a vector or a matrix of right-hand sides.
    """
    x = np.array(b, dtype=np.float64)[perm]
    n = lu.shape[0]
    for i in range(n):
        x[i] -= lu[i, :i] @ x[:i]
    for i in range(n - 1, -1, -1):
        x[i] = (x[i] - lu[i, i + 1:] @ x[i + 1:]) / lu[i, i]
    return x


def lu_invert(m):
    """Inverse of a square matrix via LU with partial pivoting."""
    lu, perm = lu_factor(m)
    return lu_solve(lu, perm, np.eye(lu.shape[0]))


def softplus(r):
    # max(r, 0) + log1p(exp(-|r|)) equals ln(1 + e^r) and cannot overflow
    return max(r, 0.0) + math.log1p(math.exp(-abs(r)))


def softplus_d1(r):
    """Logistic function, the first derivative of softplus."""
    if r >= 0.0:
        return 1.0 / (1.0 + math.exp(-r))
    e = math.exp(r)
    return e / (1.0 + e)


def softplus_d2(r):
    """Second derivative of softplus, ``s(1 - s)`` with ``s`` the logistic.

    Evaluated as ``e / (1 + e)**2`` with ``e = exp(-|r|)`` so the result stays
    positive far into the tails instead of cancelling to zero.
    """
    e = math.exp(-abs(r))
    # rounding can push the quotient a hair above the true maximum 1/4 near r = 0
    return min(e / ((1.0 + e) * (1.0 + e)), 0.25)


def fd_gradient(fn, x, h=1e-4):
    """Central finite-difference gradient of a scalar function."""
    x = np.asarray(x, dtype=np.float64)
    g = np.empty_like(x)
    for i in range(x.size):
        xp = x.copy()
        xm = x.copy()
        xp.flat[i] += h
        xm.flat[i] -= h
        g.flat[i] = (fn(xp) - fn(xm)) / (2.0 * h)
    return g


def rel_error(a, b):
    """Componentwise ``|a - b| / (1 + |b|)``, maximized."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    return float(np.max(np.abs(a - b) / (1.0 + np.abs(b)))) if a.size else 0.0
