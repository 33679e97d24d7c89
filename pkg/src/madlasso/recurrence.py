"""Matrix form of the MAD iteration and piecewise-linear convergence analysis.

In the variable ``z^k = x^k - mu A^T (A x^k - y)`` one MAD step reads

    z^{k+1} = B^k z^k + mu A^T y,
    B^k = (I - mu A^T A) (D^2 - gamma sign(z_j) d e_j^T),

with ``d`` the signs of the thresholded output and ``j`` the median index.
``B^k`` only changes when the support, its signs, the median index or the
sign of ``z_j`` change, so a run splits into segments of constant linear
dynamics. This module replays a real run through that recurrence, checks
the two agree, and fits a linear rate per segment.
"""

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .linalg import eigenvalues_dense, operator_norm
from .solvers import SolverConfig, _check_inputs
from .thresholding import ksparse_threshold, mad_threshold

__all__ = [
    "RecurrenceStep",
    "RecurrenceLog",
    "SegmentFit",
    "build_Bk",
    "augmented_matrix",
    "reduced_radius",
    "run_recurrence",
    "detect_piecewise",
    "write_log_csv",
]

RATE_SKIP = 3
MIN_SEGMENT = 10
FLOOR_RTOL = 1e-12


@dataclass(frozen=True)
class RecurrenceStep:
    k: int
    support: tuple
    signs: tuple
    median_index: int
    median_sign: float
    radius: float
    segment_id: int
    z_residual: float
    step_residual: float


@dataclass
class RecurrenceLog:
    """Per-iteration record of a replayed run.

    ``steps[k]`` describes the map from ``z^k`` to ``z^{k+1}``; ``x_final``
    is the last iterate. ``diverged`` is set when the run was cut short by
    the divergence bound.
    """

    steps: list[RecurrenceStep] = field(default_factory=list)
    x_final: np.ndarray | None = None
    mu: float = float("nan")
    diverged: bool = False

    def __len__(self):
        return len(self.steps)

    @property
    def max_z_residual(self):
        return max((s.z_residual for s in self.steps), default=0.0)

    def column(self, name):
        return np.array([getattr(s, name) for s in self.steps])


@dataclass(frozen=True)
class SegmentFit:
    segment_id: int
    start_k: int
    end_k: int
    radius: float
    fitted_rate: float
    at_fixed_point: bool = False
    n_used: int = 0


def build_Bk(A, mu, thresh):
    """``B^k`` for the thresholding state ``thresh`` of the current ``z^k``.

    ``thresh`` comes from :func:`mad_threshold` (or ``ksparse_threshold``,
    which has the same form with ``gamma = 1``). Only the columns in the
    support and the median index are nonzero.
    """
    A = np.asarray(A, dtype=float)
    N = A.shape[1]
    cols = _active_columns(thresh)
    Mc = _threshold_columns(N, thresh)[:, cols]
    B = np.zeros((N, N))
    # (I - mu A^T A) M, touching only the nonzero columns of M
    B[:, cols] = Mc - mu * (A.T @ (A @ Mc))
    return B


def _active_columns(thresh):
    return np.union1d(thresh.support, [thresh.median.index]).astype(int)


def _threshold_columns(N, thresh):
    d = np.zeros(N)
    d[thresh.support] = thresh.signs
    M = np.diag(d * d)
    j = thresh.median.index
    if thresh.median.sign != 0.0:
        M[:, j] -= thresh.gamma * thresh.median.sign * d
    return M


def augmented_matrix(B, mu, Aty):
    """The ``(N+1)``-square block ``[[B, mu A^T y], [0, 1]]``."""
    N = B.shape[0]
    out = np.zeros((N + 1, N + 1))
    out[:N, :N] = B
    out[:N, N] = mu * np.asarray(Aty, dtype=float)
    out[N, N] = 1.0
    return out


def reduced_radius(B, cols):
    """Spectral radius of ``B`` from its principal block on ``cols``.

    When every column outside ``cols`` is zero the remaining eigenvalues
    of ``B`` are zero, so this equals the full spectral radius.
    """
    cols = np.asarray(cols, dtype=int)
    if cols.size == 0:
        return 0.0
    return eigenvalues_dense(B[np.ix_(cols, cols)]).spectral_radius


def _segment_key(thresh):
    return (tuple(thresh.support.tolist()), tuple(thresh.signs.tolist()),
            thresh.median.index, thresh.median.sign)


def run_recurrence(A, y, cfg=None, n_iter=200, x0=None, norm=None):
    """Run the adaptive iteration and replay each step through ``B^k``.

    The real algorithm supplies supports and median indices. At each step
    the matrix prediction ``B^k z^k + mu A^T y`` is compared with the
    directly computed ``z^{k+1}``; the relative gap is logged as
    ``z_residual``. The spectral radius of ``B^k`` is computed once per
    segment on the index set ``support + {j}``.
    """
    cfg = cfg or SolverConfig()
    if cfg.rule == "fixed":
        raise ValueError("the matrix recurrence needs an adaptive rule")
    A, y, x = _check_inputs(A, y, x0)
    if norm is None:
        norm = operator_norm(A)
    mu = cfg.resolve_mu(A, norm)
    Aty = A.T @ y
    N = A.shape[1]

    def threshold(z):
        if cfg.rule == "mad":
            return mad_threshold(z, cfg.gamma)
        return ksparse_threshold(z, cfg.K)

    log = RecurrenceLog(mu=mu)
    radii = {}
    key_prev, seg = None, -1
    z = x - mu * (A.T @ (A @ x) - Aty)
    for k in range(n_iter):
        th = threshold(z)
        x_new = th.output
        if not np.all(np.isfinite(x_new)) or np.max(np.abs(x_new), initial=0.0) > cfg.divergence_bound:
            log.diverged = True
            break
        z_new = x_new - mu * (A.T @ (A @ x_new) - Aty)

        cols = _active_columns(th)
        Mc = _threshold_columns(N, th)[:, cols]
        Bz = (Mc - mu * (A.T @ (A @ Mc))) @ z[cols]
        pred = Bz + mu * Aty
        zres = float(np.max(np.abs(pred - z_new))) / max(1.0, float(np.max(np.abs(z_new))))

        key = _segment_key(th)
        if key != key_prev:
            seg += 1
            key_prev = key
        if key not in radii:
            B_red = Mc[cols] - mu * (A[:, cols].T @ (A @ Mc))
            radii[key] = eigenvalues_dense(B_red).spectral_radius
        step = float(np.max(np.abs(x_new - x), initial=0.0))
        log.steps.append(RecurrenceStep(
            k=k, support=key[0], signs=key[1], median_index=th.median.index,
            median_sign=th.median.sign, radius=radii[key], segment_id=seg,
            z_residual=zres, step_residual=step))
        x, z = x_new, z_new
    log.x_final = x
    return log


def detect_piecewise(log, min_length=MIN_SEGMENT, skip=RATE_SKIP):
    """Fit a linear rate to each segment of at least ``min_length`` steps.

    The rate is ``exp`` of the least-squares slope of ``log step_residual``
    against ``k``, ignoring the first ``skip`` steps of the segment and any
    residual at the floating-point floor. A segment whose residuals are all
    at the floor reports rate 0 with ``at_fixed_point`` set; a segment with
    fewer than two usable points otherwise reports ``nan``.
    """
    if len(log) < 2:
        raise ValueError("detect_piecewise needs at least two logged steps")
    scale = 1.0
    if log.x_final is not None:
        scale = max(1.0, float(np.max(np.abs(log.x_final), initial=0.0)))
    floor = FLOOR_RTOL * scale
    seg_ids = log.column("segment_id")
    out = []
    bounds = np.flatnonzero(np.diff(seg_ids)) + 1
    starts = np.r_[0, bounds]
    ends = np.r_[bounds, len(seg_ids)]
    for a, b in zip(starts, ends):
        if b - a < min_length:
            continue
        steps = log.steps[a:b]
        k = np.array([s.k for s in steps[skip:]], dtype=float)
        r = np.array([s.step_residual for s in steps[skip:]])
        use = r > floor
        if not np.any(use):
            rate, flag = 0.0, True
        elif use.sum() < 2:
            rate, flag = float("nan"), False
        else:
            slope = np.polyfit(k[use], np.log(r[use]), 1)[0]
            rate, flag = float(math.exp(slope)), False
        out.append(SegmentFit(segment_id=int(steps[0].segment_id), start_k=int(steps[0].k),
                              end_k=int(steps[-1].k), radius=float(steps[0].radius),
                              fitted_rate=rate, at_fixed_point=flag, n_used=int(use.sum())))
    return out


def write_log_csv(log, path):
    """Write ``k, segment_id, radius, z_residual, step_residual`` rows."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["k", "segment_id", "radius", "z_residual", "step_residual"])
        for s in log.steps:
            w.writerow([s.k, s.segment_id, f"{s.radius:.17g}", f"{s.z_residual:.17g}",
                        f"{s.step_residual:.17g}"])
