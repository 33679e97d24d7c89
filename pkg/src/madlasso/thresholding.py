"""Soft-thresholding with a median-absolute-deviation threshold.

Median convention: for a length-``N`` vector the median magnitude is the
order statistic at 0-based position ``N // 2`` of the sorted magnitudes
(the upper median for even ``N``). Ties are broken toward the smallest
coordinate index. All indices in this package are 0-based.
"""

from dataclasses import dataclass

import numpy as np

__all__ = [
    "MAD_TO_SIGMA",
    "MedianInfo",
    "ThresholdResult",
    "FixedPointReport",
    "soft",
    "median_abs",
    "mad_threshold",
    "mad_matrix_form",
    "estimate_sigma",
    "ksparse_threshold",
    "check_fixed_point",
]

# Phi^{-1}(3/4)
PHI_INV_3_4 = 0.6744897501960817
MAD_TO_SIGMA = 1.0 / PHI_INV_3_4


@dataclass(frozen=True)
class MedianInfo:
    value: float
    index: int
    sign: float = 0.0


@dataclass(frozen=True)
class ThresholdResult:
    output: np.ndarray
    threshold: float
    support: np.ndarray
    signs: np.ndarray
    median: MedianInfo
    gamma: float = float("nan")


@dataclass(frozen=True)
class FixedPointReport:
    lambda_star: float
    max_on_support_violation: float
    max_off_support_violation: float
    passes: bool

    @property
    def residual(self):
        return max(self.max_on_support_violation, self.max_off_support_violation)


def soft(z, t):
    """Element-wise ``sign(z) * max(|z| - t, 0)``."""
    if t < 0:
        raise ValueError("soft-threshold level must be nonnegative")
    z = np.asarray(z, dtype=float)
    return np.sign(z) * np.maximum(np.abs(z) - t, 0.0)


def median_abs(z):
    z = np.asarray(z, dtype=float).ravel()
    if z.size == 0:
        raise ValueError("median_abs of an empty vector")
    mag = np.abs(z)
    # stable sort keeps equal magnitudes in index order
    order = np.argsort(mag, kind="stable")
    value = mag[order[z.size // 2]]
    index = int(np.flatnonzero(mag == value)[0])
    return MedianInfo(value=float(value), index=index, sign=float(np.sign(z[index])))


def _result(z, out, threshold, med, gamma=float("nan")):
    support = np.flatnonzero(out)
    return ThresholdResult(output=out, threshold=float(threshold), support=support,
                           signs=np.sign(out[support]), median=med, gamma=float(gamma))


def mad_threshold(z, gamma):
    """Soft-threshold ``z`` at ``gamma * median(|z|)``.

    For ``gamma > 1`` and a positive median, fewer than ``N/2`` entries
    survive. A zero median gives a zero threshold and returns ``z``.
    """
    if not gamma > 1:
        raise ValueError(f"gamma must exceed 1, got {gamma}")
    z = np.asarray(z, dtype=float).ravel()
    med = median_abs(z)
    t = gamma * med.value
    return _result(z, soft(z, t), t, med, gamma)


def mad_matrix_form(z, gamma):
    """Matrix ``D^2 - gamma sign(z_j) d e_j^T`` whose product with ``z`` is T(z).

    ``d`` holds the signs of the thresholded output, ``D = diag(d)`` and
    ``j`` is the median index.
    """
    z = np.asarray(z, dtype=float).ravel()
    res = mad_threshold(z, gamma)
    n = z.size
    d = np.zeros(n)
    d[res.support] = res.signs
    M = np.diag(d * d)
    j = res.median.index
    M[:, j] -= gamma * np.sign(z[j]) * d
    return M


def estimate_sigma(w):
    """Robust Gaussian noise level, ``median(|w|) / Phi^{-1}(3/4)``."""
    return median_abs(w).value / PHI_INV_3_4


def ksparse_threshold(z, K):
    """Soft-threshold at the (K+1)-th largest magnitude of ``z``."""
    z = np.asarray(z, dtype=float).ravel()
    n = z.size
    if not 1 <= K < n:
        raise ValueError(f"K must satisfy 1 <= K < {n}, got {K}")
    mag = np.abs(z)
    # descending by magnitude, ascending index among ties
    order = np.lexsort((np.arange(n), -mag))
    kth = int(order[K])
    t = float(mag[kth])
    return _result(z, soft(z, t), t,
                   MedianInfo(value=t, index=kth, sign=float(np.sign(z[kth]))), 1.0)


def check_fixed_point(A, y, x, gamma, tol):
    """Check the subgradient fixed-point condition of the MAD iteration.

    With ``g = -A^T (A x - y)`` and ``lambda* = gamma * median(|g|)`` the
    condition holds when ``g_i = lambda* sign(x_i)`` on the support and
    ``|g_i| <= lambda*`` elsewhere, each up to ``tol``.
    """
    A = np.asarray(A, dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    x = np.asarray(x, dtype=float).ravel()
    if A.shape != (y.size, x.size):
        raise ValueError(f"shapes do not match: A{A.shape}, y({y.size}), x({x.size})")
    g = -A.T @ (A @ x - y)
    lam = gamma * median_abs(g).value
    on = x != 0
    on_viol = float(np.max(np.abs(g[on] - lam * np.sign(x[on])), initial=0.0))
    off_viol = float(np.max(np.abs(g[~on]) - lam, initial=0.0))
    off_viol = max(off_viol, 0.0)
    return FixedPointReport(lambda_star=float(lam), max_on_support_violation=on_viol,
                            max_off_support_violation=off_viol,
                            passes=bool(on_viol <= tol and off_viol <= tol))
