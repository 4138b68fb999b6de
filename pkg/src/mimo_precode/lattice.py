"""Complex LLL reduction of row lattice bases.

Bases are stored as rows: the reduced basis is ``T @ B`` with ``T`` a
unimodular matrix of Gaussian integers.  Callers that need column
reduction pass the transpose.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .cxmat import CMatrix, as_cmatrix, charge
from .errors import InvalidDelta, NoConvergence, RankDeficient

DEFAULT_DELTA = 0.99
GSO_UNDERFLOW = 1e-12


@dataclass(frozen=True)
class ReductionResult:
    reduced: CMatrix
    transform: CMatrix
    delta: float


def round_gaussian(z):
    """Nearest Gaussian integer, real and imaginary parts rounded half away from zero."""
    z = np.asarray(z, dtype=np.complex128)

    def _r(x):
        return np.sign(x) * np.floor(np.abs(x) + 0.5)

    return _r(z.real) + 1j * _r(z.imag)


def _gso(b: CMatrix) -> tuple[np.ndarray, np.ndarray]:
    """Gram-Schmidt coefficients mu (unit lower triangular) and squared norms."""
    n, m = b.shape
    mu = np.eye(n, dtype=np.complex128)
    bstar = np.empty_like(b)
    norms = np.empty(n)
    for i in range(n):
        v = b[i].copy()
        for j in range(i):
            mu[i, j] = np.vdot(bstar[j], b[i]) / norms[j]
            v -= mu[i, j] * bstar[j]
        bstar[i] = v
        norms[i] = np.vdot(v, v).real
    charge(n * (n - 1) // 2 * (16 * m + 2) + 4 * n * m)
    return mu, norms


def _step_budget(b: CMatrix) -> int:
    row_norms = np.linalg.norm(b, axis=1)
    ratio = row_norms.max() / row_norms.min()
    n = b.shape[0]
    return int(10 * n * n * math.log(max(ratio, 1.0))) + 1000


def clll_reduce(b, delta: float = DEFAULT_DELTA) -> ReductionResult:
    """Reduce the rows of ``b`` (n x m, n <= m, full row rank)."""
    if not 0.5 < delta <= 1.0:
        raise InvalidDelta(f"delta must lie in (0.5, 1], got {delta}")
    b = as_cmatrix(b, name="B").copy()
    n, m = b.shape
    if n > m:
        raise ValueError(f"need n <= m rows for a row basis, got {b.shape}")
    fro = np.linalg.norm(b)
    mu, norms = _gso(b)
    if fro == 0.0 or norms.min() < (GSO_UNDERFLOW * fro) ** 2:
        raise RankDeficient("basis rows are linearly dependent")

    t = np.eye(n, dtype=np.complex128)
    budget = _step_budget(b)

    def size_reduce(k: int, j: int) -> None:
        q = round_gaussian(mu[k, j])
        if q == 0:
            return
        b[k] -= q * b[j]
        t[k] -= q * t[j]
        mu[k, :j] -= q * mu[j, :j]
        mu[k, j] -= q
        charge(8 * (m + n + j) + 2)

    k = 1
    steps = 0
    while k < n:
        steps += 1
        if steps > budget:
            raise NoConvergence(f"CLLL exceeded {budget} iterations")
        if abs(mu[k, k - 1].real) > 0.5 or abs(mu[k, k - 1].imag) > 0.5:
            size_reduce(k, k - 1)
        nu = mu[k, k - 1]
        nu2 = nu.real**2 + nu.imag**2
        charge(8)
        if delta * norms[k - 1] > norms[k] + nu2 * norms[k - 1]:
            big = norms[k] + nu2 * norms[k - 1]
            mu_new = np.conj(nu) * norms[k - 1] / big
            norms[k] = norms[k - 1] * norms[k] / big
            norms[k - 1] = big
            b[[k - 1, k]] = b[[k, k - 1]]
            t[[k - 1, k]] = t[[k, k - 1]]
            mu[[k - 1, k], : k - 1] = mu[[k, k - 1], : k - 1]
            for i in range(k + 1, n):
                tmp = mu[i, k]
                mu[i, k] = mu[i, k - 1] - nu * tmp
                mu[i, k - 1] = tmp + mu_new * mu[i, k]
            mu[k, k - 1] = mu_new
            charge(12 + 16 * (n - k - 1))
            k = max(k - 1, 1)
        else:
            for j in range(k - 2, -1, -1):
                if abs(mu[k, j].real) > 0.5 or abs(mu[k, j].imag) > 0.5:
                    size_reduce(k, j)
            k += 1
    return ReductionResult(reduced=b, transform=t, delta=delta)


def orthogonality_defect(b) -> float:
    """Product of row norms over sqrt(det(B B^H)); 1 exactly for orthogonal rows."""
    b = as_cmatrix(b, name="B")
    fro = np.linalg.norm(b)
    _, norms = _gso(b)
    if fro == 0.0 or norms.min() < (GSO_UNDERFLOW * fro) ** 2:
        raise RankDeficient("singular Gram matrix")
    row2 = np.sum(np.abs(b) ** 2, axis=1)
    return float(np.sqrt(np.prod(row2 / norms)))


def is_gaussian_integer(t) -> bool:
    t = np.asarray(t)
    return bool(np.all(t.real == np.round(t.real)) and np.all(t.imag == np.round(t.imag)))
