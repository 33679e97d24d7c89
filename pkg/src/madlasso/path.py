"""LASSO homotopy path, the median-correlation map and candidate fixed points.

Along the path every correlation ``c_i(lam) = -A_i^T (A x(lam) - y)`` is
affine in ``lam`` between knots. Segments are split at support changes and
additionally wherever the index holding the median magnitude of ``c``
changes, so that each :class:`PathSegment` carries constant coefficients
``(a, b)`` with ``median(|c(lam)|) = |a lam + b|``. A fixed point of the MAD
iteration for a given ``gamma`` is a path point with
``lam = gamma |a lam + b|``.
"""

import logging
import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .linalg import solve_gram
from .thresholding import check_fixed_point, median_abs

__all__ = [
    "DegeneratePath",
    "OutOfRange",
    "ZeroMedian",
    "PathSegment",
    "Verdict",
    "FixedPointCandidate",
    "lasso_path",
    "segment_median_coeffs",
    "gamma_of_lambda",
    "find_segment",
    "candidates_for_gamma",
    "path_solution",
]

log = logging.getLogger(__name__)

KNOT_TIE_RTOL = 1e-12
FLOOR_RTOL = 1e-8
ROOT_RTOL = 1e-12
ZERO_MEDIAN = 1e-14


class DegeneratePath(ArithmeticError):
    def __init__(self, msg, knot=None):
        super().__init__(msg)
        self.knot = knot


class OutOfRange(ValueError):
    pass


class ZeroMedian(ArithmeticError):
    pass


@dataclass
class PathSegment:
    """One piece ``[lambda_lo, lambda_hi)`` of the path.

    On the piece ``x_I(lam) = p - lam * q`` and ``x`` vanishes off ``I``;
    the full correlation vector is ``corr_offset + lam * corr_slope``.
    """

    lambda_hi: float
    lambda_lo: float
    equicorrelation: np.ndarray
    signs: np.ndarray
    p: np.ndarray
    q: np.ndarray
    median_index: int
    a: float
    b: float
    corr_offset: np.ndarray = field(repr=False)
    corr_slope: np.ndarray = field(repr=False)
    segment_id: int = 0
    degenerate: bool = False

    @property
    def solution_affine(self):
        return self.p, self.q

    def contains(self, lam):
        return self.lambda_lo <= lam < self.lambda_hi

    def solution(self, lam):
        x = np.zeros(self.corr_offset.size)
        x[self.equicorrelation] = self.p - lam * self.q
        return x

    def correlation(self, lam):
        return self.corr_offset + lam * self.corr_slope

    def signed_median(self, lam):
        return self.a * lam + self.b

    def gamma(self, lam):
        m = abs(self.a * lam + self.b)
        if m <= ZERO_MEDIAN:
            raise ZeroMedian(f"median correlation vanishes at lambda={lam:g}")
        return lam / m

    def interior(self, n):
        """``n`` evenly spaced interior points (finite part for the top piece)."""
        hi = self.lambda_hi
        if math.isinf(hi):
            hi = 2.0 * self.lambda_lo if self.lambda_lo > 0 else 1.0
        return self.lambda_lo + (hi - self.lambda_lo) * (np.arange(1, n + 1) / (n + 1))


class Verdict(str, Enum):
    STABLE = "Stable"
    UNSTABLE_NECESSARY = "UnstableNecessaryFailed"
    UNSTABLE_SPECTRAL = "UnstableSpectral"
    MARGINAL = "Marginal"


@dataclass
class FixedPointCandidate:
    lambda_star: float
    x_star: np.ndarray
    gamma: float
    segment_id: int
    a: float
    b: float
    median_index: int
    gamma_slope_positive: bool
    jacobian_radius: float = float("nan")
    verdict: Verdict | None = None
    report: object = field(default=None, repr=False)

    @property
    def support(self):
        return np.flatnonzero(self.x_star)

    @property
    def stable(self):
        return self.verdict is Verdict.STABLE


def segment_median_coeffs(A, y, I, s, j):
    """Coefficients ``(a, b)`` with ``median(|c(lam)|) = |a lam + b|``.

    ``a = A_j^T A_I (A_I^T A_I)^{-1} s`` and
    ``b = A_j^T (I - A_I (A_I^T A_I)^{-1} A_I^T) y``.
    """
    A = np.asarray(A, dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    I = np.asarray(I, dtype=int)
    Aj = A[:, j]
    if I.size == 0:
        return 0.0, float(Aj @ y)
    AI = A[:, I]
    a = float(Aj @ (AI @ solve_gram(AI, np.asarray(s, dtype=float))))
    proj = AI @ solve_gram(AI, AI.T @ y)
    b = float(Aj @ (y - proj))
    return a, b


def _median_index_at(mags):
    # rows of magnitudes -> median index per row (D1 position, first index on ties)
    n = mags.shape[1]
    order = np.argsort(mags, axis=1, kind="stable")
    return order[:, n // 2]


def _median_pieces(u, v, lo, hi, scale):
    """Split ``[lo, hi)`` where the index of the median of ``|u + lam v|`` changes."""
    n = u.size
    if math.isinf(hi):
        return [(hi, lo, median_abs(u + lo * v).index)]
    iu, ku = np.triu_indices(n, 1)
    du, dv = u[iu] - u[ku], v[ku] - v[iu]
    su, sv = u[iu] + u[ku], v[iu] + v[ku]
    with np.errstate(divide="ignore", invalid="ignore"):
        roots = np.concatenate([du / dv, -su / sv])
    pair_i = np.concatenate([iu, iu])
    margin = ROOT_RTOL * scale
    keep = np.isfinite(roots) & (roots > lo + margin) & (roots < hi - margin)
    roots, pair_i = roots[keep], pair_i[keep]

    relevant = []
    chunk = 4096
    for start in range(0, roots.size, chunk):
        r = roots[start:start + chunk]
        mags = np.abs(u[None, :] + r[:, None] * v[None, :])
        med = np.partition(mags, n // 2, axis=1)[:, n // 2]
        mi = mags[np.arange(r.size), pair_i[start:start + chunk]]
        close = np.abs(mi - med) <= 1e-9 * np.maximum(med, 1e-300) + 1e-15 * scale
        relevant.append(r[close])
    bps = np.unique(np.concatenate(relevant)) if relevant else np.empty(0)
    edges = np.concatenate([[hi], bps[::-1], [lo]])
    mids = 0.5 * (edges[:-1] + edges[1:])
    mags = np.abs(u[None, :] + mids[:, None] * v[None, :])
    js = _median_index_at(mags)

    pieces = []
    cur_hi, cur_j = edges[0], int(js[0])
    for k in range(1, len(js)):
        if int(js[k]) != cur_j:
            pieces.append((cur_hi, edges[k], cur_j))
            cur_hi, cur_j = edges[k], int(js[k])
    pieces.append((cur_hi, lo, cur_j))
    return pieces


def _emit(segments, A, y, hi, lo, I, s, p, q, u, v, scale):
    for sub_hi, sub_lo, j in _median_pieces(u, v, lo, hi, scale):
        a, b = segment_median_coeffs(A, y, I, s, j)
        degenerate = abs(a) <= 1e-14 * scale and abs(b) <= 1e-14 * scale
        if degenerate:
            log.warning("median coefficients vanish on [%g, %g)", sub_lo, sub_hi)
        segments.append(PathSegment(
            lambda_hi=float(sub_hi), lambda_lo=float(sub_lo),
            equicorrelation=np.array(I, dtype=int), signs=np.array(s, dtype=float),
            p=p.copy(), q=q.copy(), median_index=j, a=a, b=b,
            corr_offset=u.copy(), corr_slope=v.copy(),
            segment_id=len(segments), degenerate=degenerate))


def lasso_path(A, y, lambda_min=0.0, full=False):
    """Piecewise-affine LASSO solution path by homotopy, from large to small lambda.

    The first segment is the zero solution on ``[||A^T y||_inf, inf)``.
    The traversal stops at ``max(lambda_min, 1e-8 ||A^T y||_inf)`` and,
    unless ``full`` is set, as soon as the active set would reach
    ``ceil(N/2)`` elements (no MAD fixed point with ``gamma > 1`` can live
    there).

    Raises :class:`DegeneratePath` when two knot events coincide, and
    :class:`~madlasso.linalg.SingularGram` for rank-deficient active sets.
    """
    A = np.asarray(A, dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    M, N = A.shape
    if y.size != M:
        raise ValueError(f"A{A.shape} and y({y.size}) are inconsistent")
    c0 = A.T @ y
    lam_max = float(np.max(np.abs(c0)))
    segments = []
    zeros = np.zeros(0)
    if lam_max == 0.0:
        _emit(segments, A, y, math.inf, 0.0, [], [], zeros, zeros, c0, np.zeros(N), 1.0)
        return segments

    scale = lam_max
    floor = max(float(lambda_min), FLOOR_RTOL * lam_max)
    _emit(segments, A, y, math.inf, lam_max, [], [], zeros, zeros, c0, np.zeros(N), scale)
    if floor >= lam_max:
        return segments

    cap = N + 1 if full else math.ceil(N / 2)
    margin = KNOT_TIE_RTOL * scale
    tied = np.flatnonzero(np.abs(c0) >= lam_max - margin)
    if tied.size > 1:
        raise DegeneratePath(
            f"coordinates {tied.tolist()} enter together at lambda={lam_max:.17g}",
            knot=lam_max)
    i0 = int(np.argmax(np.abs(c0)))
    I = [i0]
    s = [float(np.sign(c0[i0]))]
    lam = lam_max
    while True:
        AI = A[:, I]
        sv = np.array(s)
        p = solve_gram(AI, AI.T @ y)
        q = solve_gram(AI, sv)
        u = c0 - A.T @ (AI @ p)
        v = A.T @ (AI @ q)
        u[I] = 0.0
        v[I] = sv

        active = np.zeros(N, dtype=bool)
        active[I] = True
        with np.errstate(divide="ignore", invalid="ignore"):
            join_plus = u / (1.0 - v)
            join_minus = -u / (1.0 + v)
            drop = p / q
        events = []  # (lambda, kind, index)
        for cand, kind in ((join_plus, "join"), (join_minus, "join")):
            ok = ~active & np.isfinite(cand) & (cand > 0) & (cand < lam - margin)
            events.extend((float(cand[i]), kind, int(i)) for i in np.flatnonzero(ok))
        ok = np.isfinite(drop) & (drop > 0) & (drop < lam - margin)
        events.extend((float(drop[k]), "drop", I[k]) for k in np.flatnonzero(ok))
        events.sort(key=lambda e: -e[0])

        if not events or events[0][0] <= floor:
            _emit(segments, A, y, lam, floor, I, s, p, q, u, v, scale)
            break
        lam_next, kind, idx = events[0]
        if len(events) > 1 and events[1][0] > floor and lam_next - events[1][0] <= margin:
            raise DegeneratePath(
                f"knot events coincide at lambda={lam_next:.17g} "
                f"({events[0][1]} {events[0][2]}, {events[1][1]} {events[1][2]})",
                knot=lam_next)
        _emit(segments, A, y, lam, lam_next, I, s, p, q, u, v, scale)
        if kind == "join":
            if len(I) + 1 >= cap:
                break
            I.append(idx)
            s.append(float(np.sign(u[idx] + lam_next * v[idx])))
        else:
            k = I.index(idx)
            del I[k]
            del s[k]
            if not I:
                raise DegeneratePath(f"active set emptied at lambda={lam_next:g}",
                                     knot=lam_next)
        lam = lam_next
    return segments


def find_segment(segments, lam):
    for seg in segments:
        if seg.contains(lam):
            return seg
    raise OutOfRange(f"lambda={lam:g} is outside the computed path "
                     f"[{segments[-1].lambda_lo:g}, inf)")


def path_solution(segments, lam):
    return find_segment(segments, lam).solution(lam)


def gamma_of_lambda(segments, lam):
    """``gamma(lam) = lam / median(|c(lam)|)`` on the containing segment."""
    return find_segment(segments, lam).gamma(lam)


def candidates_for_gamma(A, y, segments, gamma, mu=None, classify=True):
    """All path points that are fixed points of the MAD iteration for ``gamma``.

    On each segment ``lam = gamma |a lam + b|`` is linear once the sign
    ``sigma`` of ``a lam + b`` is fixed; roots within ``1e-12 lam_max`` of
    a segment's upper knot belong to the segment above. Each candidate is
    verified against the fixed-point condition and, when ``classify`` is
    set, given a stability verdict at step ``mu`` (default ``1/||A||^2``).
    """
    from .stability import classify as _classify

    if not gamma > 1:
        raise ValueError(f"gamma must exceed 1, got {gamma}")
    A = np.asarray(A, dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    if not segments:
        return []
    scale = segments[0].lambda_lo if segments[0].lambda_lo > 0 else 1.0
    margin = ROOT_RTOL * scale
    out = []
    for seg in segments:
        if seg.degenerate:
            continue
        probe = seg.interior(1)[0]
        sigma = float(np.sign(seg.signed_median(probe)))
        if sigma == 0.0:
            continue
        denom = 1.0 - gamma * sigma * seg.a
        if denom == 0.0:
            continue
        lam = gamma * sigma * seg.b / denom
        if not (lam > 0 and seg.lambda_lo - margin <= lam < seg.lambda_hi - margin):
            continue
        x = seg.solution(lam)
        x[np.abs(x) <= 1e-12 * max(1.0, float(np.max(np.abs(x), initial=0.0)))] = 0.0
        rep = check_fixed_point(A, y, x, gamma, 1e-9 * max(1.0, scale))
        if not rep.passes:
            log.warning("root lambda=%g on segment %d fails the fixed-point check "
                        "(residual %.3g)", lam, seg.segment_id, rep.residual)
            continue
        cand = FixedPointCandidate(
            lambda_star=float(lam), x_star=x, gamma=float(gamma),
            segment_id=seg.segment_id, a=seg.a, b=seg.b,
            median_index=seg.median_index,
            gamma_slope_positive=bool(seg.b / (seg.a * lam + seg.b) > 0))
        if classify:
            _classify(A, y, cand, mu)
        out.append(cand)
    return out
