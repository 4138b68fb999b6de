"""Jit-compiled factorization cores.

Every routine returns the number of real floating point operations it
executed alongside its result.  Cost model: complex multiply 6, complex
add 2, complex multiply-add 8, complex-by-real multiply 2, real op 1,
square root 1.  The Python wrappers in :mod:`mimo_precode.cxmat` do the
validation and feed the counts into the active counters.
"""

import numpy as np
from numba import njit

EPS = np.finfo(np.float64).eps


@njit(cache=True)
def _reflector(x):
    """Hermitian reflector H = I - 2 v v^H / (v^H v) with H x = beta e_1.

    Returns (v, scale, beta, flops) where scale = 2 / (v^H v).  A zero
    input gives scale = 0 (H = I).
    """
    L = x.shape[0]
    v = x.copy()
    nrm2 = 0.0
    for i in range(L):
        nrm2 += x[i].real * x[i].real + x[i].imag * x[i].imag
    flops = 4 * L
    if nrm2 == 0.0:
        return v, 0.0, 0j, flops
    nrm = np.sqrt(nrm2)
    a0 = abs(x[0])
    if a0 == 0.0:
        ph = 1.0 + 0j
    else:
        ph = x[0] / a0
    v[0] = x[0] + ph * nrm
    vv = 2.0 * nrm * (nrm + a0)
    flops += 14
    return v, 2.0 / vv, -ph * nrm, flops


@njit(cache=True)
def _apply_left(v, scale, a):
    """a <- (I - scale v v^H) a, in place."""
    L, c = a.shape
    for j in range(c):
        w = 0j
        for i in range(L):
            w += np.conj(v[i]) * a[i, j]
        w *= scale
        for i in range(L):
            a[i, j] -= v[i] * w
    return 16 * L * c + 2 * c


@njit(cache=True)
def _apply_right(v, scale, a):
    """a <- a (I - scale v v^H), in place."""
    r, L = a.shape
    for i in range(r):
        w = 0j
        for j in range(L):
            w += a[i, j] * v[j]
        w *= scale
        for j in range(L):
            a[i, j] -= w * np.conj(v[j])
    return 16 * L * r + 2 * r


@njit(cache=True)
def householder_qr(a_in, want_q):
    """Thin Householder QR of a tall matrix, R with real non-negative diagonal."""
    m, n = a_in.shape
    a = a_in.copy()
    vs = np.zeros((n, m), dtype=np.complex128)
    scales = np.zeros(n)
    flops = 0
    for k in range(n):
        v, scale, beta, f = _reflector(a[k:, k])
        flops += f
        vs[k, k:] = v
        scales[k] = scale
        if scale != 0.0:
            flops += _apply_left(v, scale, a[k:, k + 1:])
        a[k, k] = beta
        for i in range(k + 1, m):
            a[i, k] = 0j
    r = np.zeros((n, n), dtype=np.complex128)
    for i in range(n):
        for j in range(i, n):
            r[i, j] = a[i, j]
    q = np.zeros((m, n), dtype=np.complex128)
    if want_q:
        for i in range(n):
            q[i, i] = 1.0
        for k in range(n - 1, -1, -1):
            if scales[k] != 0.0:
                flops += _apply_left(vs[k, k:], scales[k], q[k:, k:])
    # phase-normalize the diagonal of R to real positive
    for k in range(n):
        d = r[k, k]
        ad = abs(d)
        if ad != 0.0:
            ph = d / ad
            for j in range(k, n):
                r[k, j] = r[k, j] * np.conj(ph)
            r[k, k] = ad
            flops += 6 * (n - k) + 4
            if want_q:
                for i in range(m):
                    q[i, k] = q[i, k] * ph
                flops += 6 * m
    return q, r, flops


@njit(cache=True)
def cholesky(a):
    """Lower Cholesky factor of a Hermitian matrix; ok=False on a pivot <= 0."""
    n = a.shape[0]
    L = np.zeros((n, n), dtype=np.complex128)
    flops = 0
    for j in range(n):
        s = a[j, j].real
        for k in range(j):
            s -= L[j, k].real * L[j, k].real + L[j, k].imag * L[j, k].imag
        flops += 4 * j + 1
        if not s > 0.0:
            return L, False, flops
        ljj = np.sqrt(s)
        L[j, j] = ljj
        for i in range(j + 1, n):
            t = a[i, j]
            for k in range(j):
                t -= L[i, k] * np.conj(L[j, k])
            L[i, j] = t / ljj
        flops += (n - j - 1) * (8 * j + 2)
    return L, True, flops


@njit(cache=True)
def solve_lower(L, b):
    """Forward substitution L x = b for a square lower triangular L."""
    n, k = b.shape
    x = b.copy()
    flops = 0
    for i in range(n):
        dii = L[i, i]
        real_diag = dii.imag == 0.0
        for c in range(k):
            t = x[i, c]
            for j in range(i):
                t -= L[i, j] * x[j, c]
            x[i, c] = t / dii
        flops += k * (8 * i + (2 if real_diag else 11))
    return x, flops


@njit(cache=True)
def solve_upper(U, b):
    """Back substitution U x = b for a square upper triangular U."""
    n, k = b.shape
    x = b.copy()
    flops = 0
    for i in range(n - 1, -1, -1):
        dii = U[i, i]
        real_diag = dii.imag == 0.0
        for c in range(k):
            t = x[i, c]
            for j in range(i + 1, n):
                t -= U[i, j] * x[j, c]
            x[i, c] = t / dii
        flops += k * (8 * (n - 1 - i) + (2 if real_diag else 11))
    return x, flops


@njit(cache=True)
def upper_inverse(U):
    """Inverse of a square upper triangular U; only the upper triangle is computed."""
    n = U.shape[0]
    x = np.zeros((n, n), dtype=np.complex128)
    flops = 0
    for c in range(n):
        for i in range(c, -1, -1):
            dii = U[i, i]
            t = 1.0 + 0.0j if i == c else 0.0j
            for j in range(i + 1, c + 1):
                t -= U[i, j] * x[j, c]
            x[i, c] = t / dii
            flops += 8 * (c - i) + (2 if dii.imag == 0.0 else 11)
    return x, flops


@njit(cache=True)
def _rot_cols(M, i, j, c, s):
    """Columns (i, j) <- (c M_i + s M_j, -s M_i + c M_j) for real c, s."""
    for r in range(M.shape[0]):
        x = M[r, i]
        y = M[r, j]
        M[r, i] = c * x + s * y
        M[r, j] = -s * x + c * y
    return 12 * M.shape[0]


@njit(cache=True)
def _givens(f, g):
    r = np.hypot(f, g)
    if r == 0.0:
        return 1.0, 0.0, 0.0
    return f / r, g / r, r


@njit(cache=True)
def svd_tall(a_in, max_sweeps, u_cols, want_v):
    """Golub-Kahan SVD of an m x n complex matrix with m >= n.

    Householder bidiagonalization, a diagonal phase scaling that makes the
    bidiagonal real, then implicit Wilkinson-shift QR sweeps.  Returns
    (U m x u_cols, s length n descending, V n x n, flops, converged) with
    ``u_cols`` in {0, n, m}.  A factor that is not wanted comes back with
    zero rows and costs nothing.
    """
    m, n = a_in.shape
    a = a_in.copy()
    flops = 0
    uv = np.zeros((n, m), dtype=np.complex128)
    us = np.zeros(n)
    vv = np.zeros((max(n - 2, 0), n), dtype=np.complex128)
    vsc = np.zeros(max(n - 2, 0))

    for k in range(n):
        v, scale, beta, f = _reflector(a[k:, k])
        flops += f
        uv[k, k:] = v
        us[k] = scale
        if scale != 0.0:
            flops += _apply_left(v, scale, a[k:, k + 1:])
        a[k, k] = beta
        for i in range(k + 1, m):
            a[i, k] = 0j
        if k < n - 2:
            x = np.conj(a[k, k + 1:])
            v, scale, beta, f = _reflector(x)
            flops += f
            vv[k, k + 1:] = v
            vsc[k] = scale
            if scale != 0.0:
                flops += _apply_right(v, scale, a[k + 1:, k + 1:])
            a[k, k + 1] = np.conj(beta)
            for j in range(k + 2, n):
                a[k, j] = 0j

    mu_rows = m if u_cols > 0 else 0
    mv_rows = n if want_v else 0
    U = np.zeros((mu_rows, max(u_cols, n)), dtype=np.complex128)
    for i in range(min(mu_rows, u_cols)):
        U[i, i] = 1.0
    if u_cols > 0:
        for k in range(n - 1, -1, -1):
            if us[k] != 0.0:
                flops += _apply_left(uv[k, k:], us[k], U[k:, k:])
    V = np.zeros((mv_rows, n), dtype=np.complex128)
    for i in range(mv_rows):
        V[i, i] = 1.0
    if want_v:
        for k in range(n - 3, -1, -1):
            if vsc[k] != 0.0:
                flops += _apply_left(vv[k, k + 1:], vsc[k], V[k + 1:, k + 1:])

    # make the bidiagonal real
    d = np.zeros(n)
    e = np.zeros(max(n - 1, 0))
    ecur = 0j
    for k in range(n):
        dk = a[k, k]
        if k < n - 1:
            ecur = a[k, k + 1]
        ad = abs(dk)
        if ad != 0.0:
            ph = dk / ad
            for i in range(mu_rows):
                U[i, k] = U[i, k] * ph
            flops += 6 * mu_rows + 4
            if k < n - 1:
                ecur = ecur * np.conj(ph)
                flops += 6
        d[k] = ad
        if k < n - 1:
            ae = abs(ecur)
            if ae != 0.0:
                ph2 = ecur / ae
                for i in range(mv_rows):
                    V[i, k + 1] = V[i, k + 1] * np.conj(ph2)
                a[k + 1, k + 1] = a[k + 1, k + 1] * np.conj(ph2)
                flops += 6 * mv_rows + 10
            e[k] = ae

    # implicit-shift QR on the real bidiagonal (d, e)
    anorm = 0.0
    for k in range(n):
        t = abs(d[k]) + (abs(e[k]) if k < n - 1 else 0.0)
        if t > anorm:
            anorm = t
    tiny = EPS * anorm
    max_iter = max_sweeps * max(n, 1)
    it = 0
    converged = True
    while True:
        for i in range(n - 1):
            if abs(e[i]) <= EPS * (abs(d[i]) + abs(d[i + 1])) or abs(e[i]) <= tiny:
                e[i] = 0.0
        flops += 3 * max(n - 1, 0)
        q = n - 1
        while q > 0 and e[q - 1] == 0.0:
            q -= 1
        if q <= 0:
            break
        p = q - 1
        while p > 0 and e[p - 1] != 0.0:
            p -= 1
        it += 1
        if it > max_iter:
            converged = False
            break

        zero_at = -1
        for i in range(p, q + 1):
            if abs(d[i]) <= tiny:
                d[i] = 0.0
                zero_at = i
                break
        if zero_at >= 0 and zero_at < q:
            # chase e[i] along row i with left rotations
            i = zero_at
            f = e[i]
            e[i] = 0.0
            for j in range(i + 1, q + 1):
                c, s, r = _givens(d[j], f)
                d[j] = r
                flops += _rot_cols(U, j, i, c, s) + 10
                if j < q:
                    f = -s * e[j]
                    e[j] = c * e[j]
                    flops += 2
            continue
        if zero_at == q:
            # chase e[q-1] up column q with right rotations
            f = e[q - 1]
            e[q - 1] = 0.0
            for j in range(q - 1, p - 1, -1):
                c, s, r = _givens(d[j], f)
                d[j] = r
                flops += _rot_cols(V, j, q, c, s) + 10
                if j > p:
                    f = -s * e[j - 1]
                    e[j - 1] = c * e[j - 1]
                    flops += 2
            continue

        # Wilkinson shift from the trailing 2x2 of B^T B
        dm = d[q - 1]
        dn = d[q]
        em = e[q - 1]
        ep = e[q - 2] if q - 1 > p else 0.0
        t11 = dm * dm + ep * ep
        t12 = dm * em
        t22 = dn * dn + em * em
        half = 0.5 * (t11 - t22)
        disc = np.sqrt(half * half + t12 * t12)
        if half >= 0.0:
            mu = t22 - t12 * t12 / (half + disc) if half + disc != 0.0 else t22
        else:
            mu = t22 + t12 * t12 / (disc - half)
        flops += 20

        y = d[p] * d[p] - mu
        z = d[p] * e[p]
        flops += 4
        for k in range(p, q):
            c, s, r = _givens(y, z)
            if k > p:
                e[k - 1] = r
            dk = d[k]
            ek = e[k]
            d[k] = c * dk + s * ek
            e[k] = -s * dk + c * ek
            bulge = s * d[k + 1]
            d[k + 1] = c * d[k + 1]
            flops += _rot_cols(V, k, k + 1, c, s) + 16

            c, s, r = _givens(d[k], bulge)
            d[k] = r
            ek = e[k]
            dk1 = d[k + 1]
            e[k] = c * ek + s * dk1
            d[k + 1] = -s * ek + c * dk1
            flops += _rot_cols(U, k, k + 1, c, s) + 16
            if k < q - 1:
                z = s * e[k + 1]
                e[k + 1] = c * e[k + 1]
                flops += 2
            y = e[k]

    for k in range(n):
        if d[k] < 0.0:
            d[k] = -d[k]
            for i in range(mv_rows):
                V[i, k] = -V[i, k]
    order = np.argsort(-d)
    s_sorted = d[order]
    U_out = U.copy()
    V_out = np.empty_like(V)
    for idx in range(n):
        src = order[idx]
        for i in range(mu_rows):
            U_out[i, idx] = U[i, src]
        for i in range(mv_rows):
            V_out[i, idx] = V[i, src]
    return U_out, s_sorted, V_out, flops, converged
