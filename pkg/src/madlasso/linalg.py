"""Dense linear-algebra primitives used by the analysis modules.

Matrices are plain 2-D ``float64`` numpy arrays. The eigensolver is a
self-contained balance / Hessenberg / Francis double-shift QR routine for
the small nonsymmetric matrices (Jacobians, recurrence blocks) that show up
in the fixed-point analysis.
"""

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

__all__ = [
    "LinAlgFailure",
    "NonConvergence",
    "NotPositiveDefinite",
    "SingularGram",
    "Spectrum",
    "as_matrix",
    "operator_norm",
    "eigenvalues_dense",
    "rank1_pd_necessary",
    "solve_gram",
]

_EPS = np.finfo(float).eps
MAX_EIG_DIM = 512
GRAM_PIVOT_RTOL = 1e-12


class LinAlgFailure(ArithmeticError):
    """Base class for numerical failures in this module."""


class NonConvergence(LinAlgFailure):
    pass


class NotPositiveDefinite(LinAlgFailure):
    pass


class SingularGram(LinAlgFailure):
    pass


@dataclass(frozen=True)
class Spectrum:
    eigenvalues: np.ndarray  # complex
    spectral_radius: float
    converged: bool = True

    def __len__(self):
        return len(self.eigenvalues)


def as_matrix(A, name="A"):
    """Validate and return ``A`` as a finite 2-D float64 array."""
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] < 1 or A.shape[1] < 1:
        raise ValueError(f"{name} must be a non-empty 2-D array, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise ValueError(f"{name} contains non-finite entries")
    return A


def operator_norm(A, tol=1e-12, max_iter=100_000):
    """Largest singular value of ``A`` by power iteration on ``A^T A``.

    The start vector is the normalized all-ones vector, so the result is a
    deterministic function of ``A``. If ``A^T A`` annihilates the start
    vector, one restart is made from a fixed perturbed vector.
    """
    A = as_matrix(A)
    n = A.shape[1]
    if not np.any(A):
        raise ValueError("operator_norm requires a nonzero matrix")

    v = np.ones(n) / np.sqrt(n)
    restarted = False
    prev = None
    for _ in range(max_iter):
        w = A.T @ (A @ v)
        rq = float(v @ w)
        nw = np.linalg.norm(w)
        if nw == 0.0 or rq <= 0.0:
            if restarted:
                raise NonConvergence("power iteration stagnated at zero twice")
            restarted = True
            v = np.ones(n) + 0.5 * np.cos(np.arange(n) * 1.234567)
            v /= np.linalg.norm(v)
            prev = None
            continue
        v = w / nw
        if prev is not None and abs(rq - prev) <= tol * rq:
            return float(np.sqrt(rq))
        prev = rq
    raise NonConvergence(f"power iteration did not reach tol={tol} in {max_iter} steps")


def _balance(a):
    # Parlett-Reinsch balancing with radix-2 scaling; in place.
    radix = 2.0
    sqrdx = radix * radix
    n = a.shape[0]
    done = False
    while not done:
        done = True
        for i in range(n):
            c = np.sum(np.abs(a[:, i])) - abs(a[i, i])
            r = np.sum(np.abs(a[i, :])) - abs(a[i, i])
            if c != 0.0 and r != 0.0:
                g = r / radix
                f = 1.0
                s = c + r
                while c < g:
                    f *= radix
                    c *= sqrdx
                g = r * radix
                while c > g:
                    f /= radix
                    c /= sqrdx
                if (c + r) / f < 0.95 * s:
                    done = False
                    g = 1.0 / f
                    a[i, :] *= g
                    a[:, i] *= f
    return a


def _hessenberg(a):
    # Householder reduction to upper Hessenberg form; in place.
    n = a.shape[0]
    for k in range(n - 2):
        x = a[k + 1:, k].copy()
        alpha = np.linalg.norm(x)
        if alpha == 0.0:
            continue
        if x[0] > 0:
            alpha = -alpha
        v = x
        v[0] -= alpha
        vn = np.linalg.norm(v)
        if vn == 0.0:
            continue
        v /= vn
        a[k + 1:, k:] -= 2.0 * np.outer(v, v @ a[k + 1:, k:])
        a[:, k + 1:] -= 2.0 * np.outer(a[:, k + 1:] @ v, v)
        a[k + 2:, k] = 0.0
    return a


def _hqr(a, max_sweeps):
    """Eigenvalues of an upper Hessenberg matrix (Francis double-shift QR)."""
    n = a.shape[0]
    wr = np.zeros(n)
    wi = np.zeros(n)
    anorm = 0.0
    for i in range(n):
        anorm += np.sum(np.abs(a[i, max(i - 1, 0):]))
    nn = n - 1
    t = 0.0
    while nn >= 0:
        its = 0
        while True:
            # look for a single small subdiagonal element
            l = nn
            while l >= 1:
                s = abs(a[l - 1, l - 1]) + abs(a[l, l])
                if s == 0.0:
                    s = anorm
                if abs(a[l, l - 1]) <= _EPS * s:
                    a[l, l - 1] = 0.0
                    break
                l -= 1
            x = a[nn, nn]
            if l == nn:
                wr[nn] = x + t
                wi[nn] = 0.0
                nn -= 1
                break
            y = a[nn - 1, nn - 1]
            w = a[nn, nn - 1] * a[nn - 1, nn]
            if l == nn - 1:
                p = 0.5 * (y - x)
                q = p * p + w
                z = np.sqrt(abs(q))
                x += t
                if q >= 0.0:
                    z = p + (z if p >= 0 else -z)
                    wr[nn - 1] = wr[nn] = x + z
                    if z != 0.0:
                        wr[nn] = x - w / z
                    wi[nn - 1] = wi[nn] = 0.0
                else:
                    wr[nn - 1] = wr[nn] = x + p
                    wi[nn - 1] = z
                    wi[nn] = -z
                nn -= 2
                break
            if its >= max_sweeps:
                raise NonConvergence(f"QR sweeps exceeded {max_sweeps} for one eigenvalue")
            if its > 0 and its % 10 == 0:
                # exceptional shift
                t += x
                for i in range(nn + 1):
                    a[i, i] -= x
                s = abs(a[nn, nn - 1]) + abs(a[nn - 1, nn - 2])
                y = x = 0.75 * s
                w = -0.4375 * s * s
            its += 1
            m = nn - 2
            while m >= l:
                z = a[m, m]
                r = x - z
                s = y - z
                p = (r * s - w) / a[m + 1, m] + a[m, m + 1]
                q = a[m + 1, m + 1] - z - r - s
                r = a[m + 2, m + 1]
                s = abs(p) + abs(q) + abs(r)
                p /= s
                q /= s
                r /= s
                if m == l:
                    break
                u = abs(a[m, m - 1]) * (abs(q) + abs(r))
                v = abs(p) * (abs(a[m - 1, m - 1]) + abs(z) + abs(a[m + 1, m + 1]))
                if u <= _EPS * v:
                    break
                m -= 1
            for i in range(m + 2, nn + 1):
                a[i, i - 2] = 0.0
                if i != m + 2:
                    a[i, i - 3] = 0.0
            for k in range(m, nn):
                if k != m:
                    p = a[k, k - 1]
                    q = a[k + 1, k - 1]
                    r = a[k + 2, k - 1] if k != nn - 1 else 0.0
                    x = abs(p) + abs(q) + abs(r)
                    if x != 0.0:
                        p /= x
                        q /= x
                        r /= x
                s = np.sqrt(p * p + q * q + r * r)
                if p < 0:
                    s = -s
                if s == 0.0:
                    continue
                if k == m:
                    if l != m:
                        a[k, k - 1] = -a[k, k - 1]
                else:
                    a[k, k - 1] = -s * x
                p += s
                x = p / s
                y = q / s
                z = r / s
                q /= p
                r /= p
                cols = slice(k, nn + 1)
                pr = a[k, cols] + q * a[k + 1, cols]
                if k != nn - 1:
                    pr = pr + r * a[k + 2, cols]
                    a[k + 2, cols] -= pr * z
                a[k + 1, cols] -= pr * y
                a[k, cols] -= pr * x
                rows = slice(l, min(nn, k + 3) + 1)
                pc = x * a[rows, k] + y * a[rows, k + 1]
                if k != nn - 1:
                    pc = pc + z * a[rows, k + 2]
                    a[rows, k + 2] -= pc * r
                a[rows, k + 1] -= pc * q
                a[rows, k] -= pc
    return wr + 1j * wi


def eigenvalues_dense(B, tol=1e-10, max_sweeps=100):
    """All eigenvalues of a small dense (possibly nonsymmetric) matrix.

    Returns a :class:`Spectrum`; complex-conjugate pairs appear adjacently.
    ``tol`` is the relative residual the caller may expect; it is not used
    to stop the sweeps, which run to machine precision.
    """
    B = as_matrix(B, "B")
    n, m = B.shape
    if n != m:
        raise ValueError(f"eigenvalues_dense needs a square matrix, got {B.shape}")
    if n > MAX_EIG_DIM:
        raise ValueError(f"matrix dimension {n} exceeds desk-scale bound {MAX_EIG_DIM}")
    a = B.copy()
    if n == 1:
        ev = a[0, :1].astype(complex)
    else:
        _balance(a)
        _hessenberg(a)
        ev = _hqr(a, max_sweeps)
    radius = float(np.max(np.abs(ev))) if n else 0.0
    return Spectrum(eigenvalues=ev, spectral_radius=radius, converged=True)


def _cholesky(C):
    try:
        return np.linalg.cholesky(C)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite(str(exc)) from None


def rank1_pd_necessary(C, u, v):
    """Return ``1 + v^T C^{-1} u`` for a symmetric positive definite ``C``.

    By the matrix determinant lemma this equals ``det(C + u v^T) / det(C)``;
    ``C + u v^T`` can only be positive definite when it is positive.
    """
    C = as_matrix(C, "C")
    u = np.asarray(u, dtype=float).ravel()
    v = np.asarray(v, dtype=float).ravel()
    if C.shape[0] != C.shape[1] or len(u) != C.shape[0] or len(v) != C.shape[0]:
        raise ValueError("dimension mismatch in rank1_pd_necessary")
    if not np.allclose(C, C.T, rtol=1e-12, atol=1e-14 * np.max(np.abs(C))):
        raise NotPositiveDefinite("C is not symmetric")
    L = _cholesky(C)
    w = solve_triangular(L, u, lower=True)
    w = solve_triangular(L.T, w, lower=False)
    return float(1.0 + v @ w)


def solve_gram(A_I, rhs):
    """Solve ``(A_I^T A_I) w = rhs`` by Cholesky.

    Raises :class:`SingularGram` when a Cholesky pivot falls below
    ``1e-12`` times the largest Gram diagonal entry.
    """
    A_I = np.asarray(A_I, dtype=float)
    if A_I.ndim == 1:
        A_I = A_I[:, None]
    rhs = np.asarray(rhs, dtype=float)
    k = A_I.shape[1]
    if k == 0:
        return np.zeros(0)
    G = A_I.T @ A_I
    dmax = float(np.max(np.diag(G)))
    try:
        L = np.linalg.cholesky(G)
    except np.linalg.LinAlgError:
        raise SingularGram("Gram matrix is not numerically positive definite") from None
    pivots = np.diag(L) ** 2
    if dmax <= 0.0 or np.min(pivots) < GRAM_PIVOT_RTOL * dmax:
        raise SingularGram(
            f"Gram pivot {np.min(pivots):.3e} below {GRAM_PIVOT_RTOL:g} x {dmax:.3e}")
    w = solve_triangular(L, rhs, lower=True)
    return solve_triangular(L.T, w, lower=False)
