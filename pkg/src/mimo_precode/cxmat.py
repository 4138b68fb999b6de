"""Complex dense matrix kernels with floating point operation counting.

Matrices are plain ``complex128`` numpy arrays.  Every arithmetic kernel a
precoder uses goes through this module so that the work it does can be
charged to the counters opened with :func:`count_flops`.

Cost model (real flops): complex multiply 6, complex add 2, complex
multiply-add 8, complex-by-real multiply 2, real op 1.
"""

from __future__ import annotations

from contextlib import contextmanager
from contextvars import ContextVar
from dataclasses import dataclass
from typing import Iterator, Optional

import numpy as np

from . import _kernels
from .errors import (
    DivisionByZero,
    NoConvergence,
    NotPositiveDefinite,
    RankDeficient,
    Singular,
)

CMatrix = np.ndarray

QR_RANK_TOL = 1e-10
SINGULAR_PIVOT_TOL = 1e-12
HERMITIAN_TOL = 1e-12
SVD_MAX_SWEEPS = 100


@dataclass
class OpCounter:
    flops: int = 0


_active: ContextVar[tuple[OpCounter, ...]] = ContextVar("active_counters", default=())


@contextmanager
def count_flops() -> Iterator[OpCounter]:
    """Open a counting scope; nested scopes all see the inner work."""
    counter = OpCounter()
    token = _active.set(_active.get() + (counter,))
    try:
        yield counter
    finally:
        _active.reset(token)


def charge(flops: int) -> None:
    for counter in _active.get():
        counter.flops += int(flops)


def as_cmatrix(a, *, name: str = "matrix") -> CMatrix:
    """Validate and convert to a 2-D finite complex128 array."""
    m = np.asarray(a, dtype=np.complex128)
    if m.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError(f"{name} has non-finite entries")
    return m


def ctranspose(a: CMatrix) -> CMatrix:
    return a.conj().T


# --- counted elementary kernels ---------------------------------------------


def matmul(a: CMatrix, b: CMatrix) -> CMatrix:
    m, k = a.shape
    k2, n = b.shape
    if k != k2:
        raise ValueError(f"shape mismatch {a.shape} @ {b.shape}")
    charge(8 * m * k * n)
    return a @ b


def gram(a: CMatrix) -> CMatrix:
    """A^H A, charging only the Hermitian half."""
    m, n = a.shape
    charge(8 * m * n * (n + 1) // 2)
    return a.conj().T @ a


def outer_gram(a: CMatrix) -> CMatrix:
    """A A^H, charging only the Hermitian half."""
    m, n = a.shape
    charge(8 * n * m * (m + 1) // 2)
    return a @ a.conj().T


def add_identity(a: CMatrix, alpha: float) -> CMatrix:
    n = a.shape[0]
    charge(n)
    return a + alpha * np.eye(n)


def scale_columns(a: CMatrix, d) -> CMatrix:
    """A @ diag(d) for real d."""
    charge(2 * a.size)
    return a * np.asarray(d, dtype=float)[np.newaxis, :]


def fro_norm2(a: CMatrix) -> float:
    charge(4 * a.size)
    return float(np.sum(a.real**2 + a.imag**2))


# --- factorizations -----------------------------------------------------------


def qr_thin(a) -> tuple[CMatrix, CMatrix]:
    """Householder QR of a tall matrix: A = Q R, Q^H Q = I, diag(R) > 0."""
    a = as_cmatrix(a, name="A")
    m, n = a.shape
    if m < n:
        raise ValueError(f"qr_thin needs m >= n, got {a.shape}")
    q, r, flops = _kernels.householder_qr(a, True)
    charge(flops)
    _check_qr_rank(a, r)
    return q, r


def qr_r(a) -> CMatrix:
    """Triangular factor of the thin QR, without forming Q."""
    a = as_cmatrix(a, name="A")
    if a.shape[0] < a.shape[1]:
        raise ValueError(f"qr_r needs m >= n, got {a.shape}")
    _, r, flops = _kernels.householder_qr(a, False)
    charge(flops)
    _check_qr_rank(a, r)
    return r


def _check_qr_rank(a: CMatrix, r: CMatrix) -> None:
    scale = np.linalg.norm(a)
    diag = np.abs(np.diag(r))
    if diag.size and (scale == 0.0 or diag.min() < QR_RANK_TOL * scale):
        raise RankDeficient(f"column rank deficient, min |R_kk| = {diag.min():.3e}")


def svd(
    a, *, want_u: bool = True, want_v: bool = True, full: bool = True
) -> tuple[Optional[CMatrix], np.ndarray, Optional[CMatrix]]:
    """SVD A = U diag(S) V^H with S descending.

    ``full`` gives U (m x m) and V (n x n); otherwise both are trimmed to
    min(m, n) columns and only those columns are accumulated.  A factor
    switched off with ``want_u``/``want_v`` is neither accumulated nor
    charged, and is returned as ``None``.
    """
    a = as_cmatrix(a, name="A")
    m, n = a.shape
    k = min(m, n)
    if m >= n:
        u_cols = (m if full else n) if want_u else 0
        u, s, v, flops, ok = _kernels.svd_tall(a, SVD_MAX_SWEEPS, u_cols, want_v)
    else:
        v_cols = (n if full else m) if want_v else 0
        v, s, u, flops, ok = _kernels.svd_tall(a.conj().T.copy(), SVD_MAX_SWEEPS, v_cols, want_u)
    charge(flops)
    if not ok:
        raise NoConvergence(f"bidiagonal QR exceeded {SVD_MAX_SWEEPS} sweeps")
    u = (u if full else u[:, :k]) if want_u else None
    v = (v if full else v[:, :k]) if want_v else None
    return u, s, v


def numerical_rank(s: np.ndarray, tol: float = 1e-10) -> int:
    if s.size == 0 or s[0] == 0.0:
        return 0
    return int(np.sum(s > tol * s[0]))


def cholesky(a) -> CMatrix:
    a = as_cmatrix(a, name="A")
    L, ok, flops = _kernels.cholesky(a)
    charge(flops)
    if not ok:
        raise NotPositiveDefinite("non-positive pivot in Cholesky factorization")
    return L


def tri_solve(t: CMatrix, b: CMatrix, *, lower: bool) -> CMatrix:
    b = np.ascontiguousarray(b, dtype=np.complex128)
    t = np.ascontiguousarray(t, dtype=np.complex128)
    x, flops = _kernels.solve_lower(t, b) if lower else _kernels.solve_upper(t, b)
    charge(flops)
    return x


def upper_inverse(t: CMatrix) -> CMatrix:
    """Inverse of an upper triangular matrix, skipping the structural zeros."""
    t = np.ascontiguousarray(t, dtype=np.complex128)
    x, flops = _kernels.upper_inverse(t)
    charge(flops)
    return x


def _cholesky_solve(L: CMatrix, b: CMatrix) -> CMatrix:
    y = tri_solve(L, b, lower=True)
    return tri_solve(np.ascontiguousarray(L.conj().T), y, lower=False)


def herm_solve(a, b) -> CMatrix:
    """Solve A X = B for Hermitian positive definite A via Cholesky."""
    a = as_cmatrix(a, name="A")
    b = as_cmatrix(b, name="B")
    scale = max(np.linalg.norm(a), np.finfo(float).tiny)
    if np.linalg.norm(a - a.conj().T) > HERMITIAN_TOL * scale:
        raise ValueError("A is not Hermitian")
    return _cholesky_solve(cholesky(a), b)


def regularized_inverse(h, alpha: float) -> CMatrix:
    """(H^H H + alpha I)^{-1} H^H through a Cholesky solve."""
    h = as_cmatrix(h, name="H")
    if alpha < 0:
        raise ValueError(f"alpha must be >= 0, got {alpha}")
    g = add_identity(gram(h), alpha)
    try:
        L = cholesky(g)
    except NotPositiveDefinite as exc:
        raise Singular("Gram matrix is singular") from exc
    if alpha == 0.0:
        pivots = np.diag(L).real ** 2
        if pivots.min() < SINGULAR_PIVOT_TOL * np.trace(g).real:
            raise Singular("Gram matrix is numerically singular")
    return _cholesky_solve(L, np.ascontiguousarray(h.conj().T))


def inv_sqrt_diag_reg(s, alpha: float, n: int) -> np.ndarray:
    """Diagonal of (S^T S + alpha I_n)^{-1/2} with S zero padded to n."""
    s = np.asarray(s, dtype=float)
    if np.any(s < 0) or alpha < 0:
        raise ValueError("singular values and alpha must be non-negative")
    if s.size > n:
        raise ValueError(f"{s.size} singular values do not fit in size {n}")
    padded = np.zeros(n)
    padded[: s.size] = s**2
    padded += alpha
    if np.any(padded == 0.0):
        raise DivisionByZero("zero singular value with alpha = 0")
    charge(4 * n)
    return 1.0 / np.sqrt(padded)
