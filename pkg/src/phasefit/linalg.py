"""Dense matrix kernels: matrix exponential via uniformization, Van Loan
convolution blocks, matrix functions of sub-intensity matrices, and a
partial-pivoting linear solve.

All matrices are plain ``numpy.ndarray`` of float64.  Dimensions in this
library are small (a handful of phases), so no sparse or structured formats
are used.
"""

from __future__ import annotations

import math

import numpy as np

from .exceptions import SingularMatrixError

DEFAULT_EPS = 1e-12

# Validation tolerances for sub-intensity matrices.  EM M-steps produce tiny
# negative noise in the off-diagonals, which is clamped rather than rejected.
OFFDIAG_CLAMP = 1e-12
ROWSUM_TOL = 1e-10


def as_matrix(a) -> np.ndarray:
    """Coerce to a finite 2-d float array."""
    m = np.asarray(a, dtype=float)
    if m.ndim != 2:
        raise ValueError(f"expected a 2-d array, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError("matrix entries must be finite")
    return m


def validate_sub_intensity(T) -> np.ndarray:
    """Check sub-intensity structure and return a cleaned copy.

    Off-diagonals in [-OFFDIAG_CLAMP, 0) are clamped to 0; diagonal entries
    must be negative and row sums at most ROWSUM_TOL.  Invertibility is
    checked by a solve against the all-ones vector.
    """
    T = as_matrix(T).copy()
    p = T.shape[0]
    if T.shape[1] != p:
        raise ValueError("sub-intensity matrix must be square")
    off = ~np.eye(p, dtype=bool)
    bad = (T < -OFFDIAG_CLAMP) & off
    if np.any(bad):
        raise ValueError("sub-intensity off-diagonal entries must be nonnegative")
    T[off & (T < 0.0)] = 0.0
    if np.any(np.diag(T) >= 0.0):
        raise ValueError("sub-intensity diagonal entries must be negative")
    rowsum = T.sum(axis=1)
    if np.any(rowsum > ROWSUM_TOL):
        raise ValueError("sub-intensity row sums must be nonpositive")
    # raises SingularMatrixError if not invertible
    solve(T, np.ones((p, 1)))
    return T


def exit_rates(T: np.ndarray) -> np.ndarray:
    """Exit-rate vector of a sub-intensity matrix: minus the row sums."""
    t = -np.asarray(T).sum(axis=1)
    return np.where(t < 0.0, 0.0, t)


def _poisson_truncation(lam: float, eps: float) -> int:
    """Smallest M with P(Poisson(lam) > M) <= eps."""
    term = math.exp(-lam)
    cdf = term
    n = 0
    while 1.0 - cdf > eps and n < 2000:
        n += 1
        term *= lam / n
        cdf += term
    return n


def expm_batch(T, ys, eps: float = DEFAULT_EPS) -> np.ndarray:
    """e^{T y} for a single square matrix and a batch of nonnegative scalars.

    Uses the uniformization series with phi = max |diagonal|, truncated so
    the Poisson tail is at most ``eps`` at the scaled-down argument
    y' = y / 2^m (m minimal with phi*y' < 1), followed by m squarings.
    Returns an array of shape (len(ys), p, p); e^{T*0} is exactly I.
    """
    T = as_matrix(T)
    p = T.shape[0]
    if T.shape[1] != p:
        raise ValueError("expm requires a square matrix")
    ys = np.atleast_1d(np.asarray(ys, dtype=float))
    if np.any(ys < 0.0):
        raise ValueError("expm requires nonnegative y")
    if eps <= 0.0:
        raise ValueError("eps must be positive")
    n = ys.shape[0]
    phi = float(np.max(np.abs(np.diag(T))))
    if phi == 0.0:
        phi = max(float(np.max(np.abs(T))), 1.0)
    P = np.eye(p) + T / phi

    lam = phi * ys
    m = np.zeros(n, dtype=int)
    big = lam >= 1.0
    m[big] = np.floor(np.log2(lam[big])).astype(int) + 1
    lam_scaled = lam / np.exp2(m)

    M = _poisson_truncation(float(lam_scaled.max(initial=0.0)), eps)
    # Poisson weights w[i, k] = e^{-lam_i} lam_i^k / k!
    w = np.empty((n, M + 1))
    w[:, 0] = np.exp(-lam_scaled)
    for k in range(1, M + 1):
        w[:, k] = w[:, k - 1] * lam_scaled / k
    Ppow = np.empty((M + 1, p, p))
    Ppow[0] = np.eye(p)
    for k in range(1, M + 1):
        Ppow[k] = Ppow[k - 1] @ P
    E = np.einsum("nk,kab->nab", w, Ppow)
    for s in range(int(m.max(initial=0))):
        idx = m > s
        E[idx] = E[idx] @ E[idx]
    return E


def expm(T, y: float, eps: float = DEFAULT_EPS) -> np.ndarray:
    """e^{T y} for a single nonnegative scalar y."""
    return expm_batch(T, [y], eps)[0]


def van_loan_batch(A, C, ys, eps: float = DEFAULT_EPS):
    """Convolution integrals int_0^y e^{A(y-u)} C e^{A u} du for a batch of y.

    Computed as the upper-right block of exp([[A, C], [0, A]] y); the
    diagonal blocks equal e^{A y}.  Returns (E, G) with shapes
    (len(ys), p, p) each, where E = e^{A y}.
    """
    A = as_matrix(A)
    C = as_matrix(C)
    p = A.shape[0]
    if A.shape != C.shape:
        raise ValueError("Van Loan blocks must have matching shapes")
    B = np.zeros((2 * p, 2 * p))
    B[:p, :p] = A
    B[p:, p:] = A
    B[:p, p:] = C
    F = expm_batch(B, ys, eps)
    return F[:, p:, p:], F[:, :p, p:]


def van_loan_per_item(A, Cs, ys, eps: float = DEFAULT_EPS):
    """Convolution integrals int_0^{y_i} e^{A(y_i-u)} C_i e^{A u} du where
    both the inner matrix C_i and the horizon y_i vary per item.

    Uniformization of the block matrices [[A, C_i], [0, A]] with a shared
    rate (the series terms are batched matrix products); scaling and
    squaring per item as in ``expm_batch``.  Returns (E, G) with
    E_i = e^{A y_i} and G_i the integral, shapes (n, p, p).
    """
    A = as_matrix(A)
    Cs = np.asarray(Cs, dtype=float)
    p = A.shape[0]
    ys = np.atleast_1d(np.asarray(ys, dtype=float))
    n = ys.shape[0]
    if Cs.shape != (n, p, p):
        raise ValueError("per-item C must have shape (n, p, p)")
    if np.any(ys < 0.0):
        raise ValueError("van_loan_per_item requires nonnegative y")
    if n == 0:
        empty = np.zeros((0, p, p))
        return empty, empty.copy()
    B = np.zeros((n, 2 * p, 2 * p))
    B[:, :p, :p] = A
    B[:, p:, p:] = A
    B[:, :p, p:] = Cs
    # keep the scaled matrices O(1): fold large C entries into the rate
    phi = max(float(np.max(np.abs(np.diag(A)))), float(np.abs(Cs).max()), 1e-300)
    P = np.eye(2 * p) + B / phi

    lam = phi * ys
    m = np.zeros(n, dtype=int)
    big = lam >= 1.0
    m[big] = np.floor(np.log2(lam[big])).astype(int) + 1
    lam_scaled = lam / np.exp2(m)

    M = _poisson_truncation(float(lam_scaled.max(initial=0.0)), eps)
    w = np.empty((n, M + 1))
    w[:, 0] = np.exp(-lam_scaled)
    term = np.broadcast_to(np.eye(2 * p), (n, 2 * p, 2 * p)).copy()
    F = w[:, 0, None, None] * term
    for k in range(1, M + 1):
        w[:, k] = w[:, k - 1] * lam_scaled / k
        term = term @ P
        F += w[:, k, None, None] * term
    for s in range(int(m.max(initial=0))):
        idx = m > s
        F[idx] = F[idx] @ F[idx]
    return F[:, p:, p:], F[:, :p, p:]


def van_loan_G(pi, T, y: float, eps: float = DEFAULT_EPS) -> np.ndarray:
    """G(y; pi, T) = int_0^y e^{T(y-u)} t pi e^{Tu} du with t = -T e."""
    pi = np.asarray(pi, dtype=float)
    T = as_matrix(T)
    if pi.shape != (T.shape[0],):
        raise ValueError("pi dimension must match T")
    if np.any(pi < 0.0):
        raise ValueError("pi must be nonnegative")
    t = exit_rates(T)
    _, G = van_loan_batch(T, np.outer(t, pi), [y], eps)
    return G[0]


def matrix_power(T, base: float, eps: float = DEFAULT_EPS) -> np.ndarray:
    """base^T = e^{T log(base)} for base > 0 (functional calculus).

    For base >= 1 the exponent scalar log(base) is nonnegative and the
    uniformization kernel applies directly; base in (0, 1) is handled as
    the matrix inverse of base^{-T} = e^{T |s|}.
    """
    if base <= 0.0:
        raise ValueError("matrix power requires a positive base")
    s = math.log(base)
    if s >= 0.0:
        return expm(T, s, eps)
    E = expm(T, -s, eps)
    return solve(E, np.eye(E.shape[0]))


def solve(A, B) -> np.ndarray:
    """Solve A X = B by LU with partial pivoting.

    Raises SingularMatrixError when a pivot falls below 1e-13 * ||A||_inf.
    """
    A = as_matrix(A).copy()
    B = np.asarray(B, dtype=float)
    squeeze = B.ndim == 1
    X = B.reshape(B.shape[0], -1).astype(float).copy()
    p = A.shape[0]
    if A.shape[1] != p or X.shape[0] != p:
        raise ValueError("dimension mismatch in solve")
    tol = 1e-13 * max(float(np.abs(A).max()), 1e-300)
    for k in range(p):
        piv = k + int(np.argmax(np.abs(A[k:, k])))
        if abs(A[piv, k]) < tol:
            raise SingularMatrixError(f"pivot below tolerance at column {k}")
        if piv != k:
            A[[k, piv]] = A[[piv, k]]
            X[[k, piv]] = X[[piv, k]]
        factors = A[k + 1:, k] / A[k, k]
        A[k + 1:, k + 1:] -= np.outer(factors, A[k, k + 1:])
        X[k + 1:] -= np.outer(factors, X[k])
    for k in range(p - 1, -1, -1):
        X[k] = (X[k] - A[k, k + 1:] @ X[k + 1:]) / A[k, k]
    return X[:, 0] if squeeze else X


def green_matrix(T) -> np.ndarray:
    """(-T)^{-1}, the expected-occupation matrix of a sub-intensity T."""
    p = as_matrix(T).shape[0]
    return solve(-as_matrix(T), np.eye(p))
