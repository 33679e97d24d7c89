"""Local stability of candidate fixed points of the MAD iteration.

Near a fixed point with support ``I`` and median index ``j`` the iteration
restricted to ``I`` is smooth, with Jacobian

    J = I - mu A_I^T A_I + gamma mu sign(-A_j^T (A x* - y)) s A_j^T A_I.

The spectral radius of ``J`` decides stability. The sign test on
``b / (a lam* + b)`` is only a necessary condition and is reported beside it.
"""

from dataclasses import dataclass, field

import numpy as np

from .linalg import (Spectrum, eigenvalues_dense, operator_norm, rank1_pd_necessary,
                     solve_gram)
from .path import Verdict

__all__ = [
    "EmptySupport",
    "StabilityReport",
    "STABILITY_MARGIN",
    "jacobian_at",
    "rank1_form",
    "classify",
    "mu_bound",
]

STABILITY_MARGIN = 1e-9


class EmptySupport(ValueError):
    pass


@dataclass
class StabilityReport:
    necessary_ok: bool
    necessary_value: float
    determinant_ratio: float
    jacobian_radius: float
    mu_used: float
    mu_bound: float
    eigenvalues: Spectrum
    verdict: Verdict
    notes: list[str] = field(default_factory=list)

    def to_dict(self):
        ev = self.eigenvalues.eigenvalues
        return {
            "necessary_ok": self.necessary_ok,
            "necessary_value": self.necessary_value,
            "determinant_ratio": self.determinant_ratio,
            "jacobian_radius": self.jacobian_radius,
            "mu_used": self.mu_used,
            "mu_bound": self.mu_bound,
            "eigenvalues": [[float(z.real), float(z.imag)] for z in ev],
            "verdict": self.verdict.value,
            "notes": list(self.notes),
        }


def _median_sign(A, y, x_star, j):
    r = float(-A[:, j] @ (A @ x_star - y))
    if r == 0.0:
        raise ValueError(f"correlation at median index {j} is zero")
    return float(np.sign(r))


def rank1_form(A, y, x_star, gamma, j):
    """Pieces ``(C, u, v)`` of ``C + u v^T = A_I^T A_I - gamma sigma s A_j^T A_I``."""
    A = np.asarray(A, dtype=float)
    I = np.flatnonzero(x_star)
    if I.size == 0:
        raise EmptySupport("fixed point has empty support")
    AI = A[:, I]
    s = np.sign(x_star[I])
    sigma = _median_sign(A, y, x_star, j)
    return AI.T @ AI, -gamma * sigma * s, AI.T @ A[:, j]


def jacobian_at(A, y, x_star, gamma, mu, j):
    """Jacobian of the on-support update map at ``x_star`` (size ``|I| x |I|``)."""
    A = np.asarray(A, dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    x_star = np.asarray(x_star, dtype=float).ravel()
    I = np.flatnonzero(x_star)
    if I.size == 0:
        raise EmptySupport("fixed point has empty support")
    if j in set(I.tolist()):
        raise ValueError(f"median index {j} lies on the support")
    AI = A[:, I]
    solve_gram(AI, np.zeros(I.size))  # full column rank check
    s = np.sign(x_star[I])
    sigma = _median_sign(A, y, x_star, j)
    return (np.eye(I.size) - mu * (AI.T @ AI)
            + gamma * mu * sigma * np.outer(s, AI.T @ A[:, j]))


def mu_bound(cand, A, norm=None):
    """Step-size bound ``2 min(1, 1 + a lam*/b) / ||A_I||_2^2``.

    Returns ``(bound, fallback_used)``; the fallback ``2/||A||_2^2`` applies
    when ``b`` vanishes, the support is empty or the expression is not
    positive.
    """
    A = np.asarray(A, dtype=float)
    I = np.flatnonzero(cand.x_star)
    b = cand.b
    scale = max(abs(cand.a * cand.lambda_star), abs(b), 1e-300)
    if I.size == 0 or abs(b) <= 1e-12 * scale:
        fallback = True
    else:
        factor = min(1.0, 1.0 + cand.a * cand.lambda_star / b)
        fallback = factor <= 0
    if fallback:
        nA = operator_norm(A) if norm is None else norm
        return 2.0 / nA ** 2, True
    nI = np.linalg.norm(A[:, I], 2)
    return 2.0 * factor / nI ** 2, False


def _has_complex_negative_pair(ev, tol):
    return bool(np.any((np.abs(ev.imag) > tol) & (ev.real < 0)))


def classify(A, y, cand, mu=None, norm=None):
    """Stability verdict for a candidate fixed point at step ``mu``.

    Fills ``cand.jacobian_radius``, ``cand.verdict`` and ``cand.report``
    and returns the :class:`StabilityReport`.
    """
    A = np.asarray(A, dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    if norm is None:
        norm = operator_norm(A)
    if mu is None:
        mu = 1.0 / norm ** 2
    x = cand.x_star
    notes = []
    denom = cand.a * cand.lambda_star + cand.b
    necessary_value = cand.b / denom
    necessary_ok = bool(necessary_value > 0)
    bound, fallback = mu_bound(cand, A, norm)
    if fallback:
        notes.append("mu-bound-fallback")

    if np.count_nonzero(x) == 0:
        notes.append("empty-support")
        spectrum = Spectrum(eigenvalues=np.zeros(0, dtype=complex), spectral_radius=0.0)
        det_ratio = 1.0
    else:
        C, u, v = rank1_form(A, y, x, cand.gamma, cand.median_index)
        det_ratio = rank1_pd_necessary(C, u, v)
        if (det_ratio > 0) != necessary_ok and abs(det_ratio) > 1e-12:
            notes.append("necessary-condition-mismatch")
        J = jacobian_at(A, y, x, cand.gamma, mu, cand.median_index)
        spectrum = eigenvalues_dense(J)
        ev_m = eigenvalues_dense(C + np.outer(u, v)).eigenvalues
        if _has_complex_negative_pair(ev_m, 1e-12 * np.max(np.abs(ev_m))):
            notes.append("complex-pair-negative-real-part")
    radius = spectrum.spectral_radius

    if radius < 1.0 - STABILITY_MARGIN:
        if necessary_ok:
            verdict = Verdict.STABLE
        else:
            notes.append("inconsistent")
            verdict = Verdict.MARGINAL
    elif radius <= 1.0 + STABILITY_MARGIN:
        notes.append("marginal")
        verdict = Verdict.MARGINAL
    elif not necessary_ok:
        verdict = Verdict.UNSTABLE_NECESSARY
    else:
        verdict = Verdict.UNSTABLE_SPECTRAL
        if mu > bound and not fallback:
            notes.append("step-exceeds-bound")

    report = StabilityReport(
        necessary_ok=necessary_ok, necessary_value=float(necessary_value),
        determinant_ratio=float(det_ratio), jacobian_radius=float(radius),
        mu_used=float(mu), mu_bound=float(bound), eigenvalues=spectrum,
        verdict=verdict, notes=notes)
    cand.jacobian_radius = float(radius)
    cand.verdict = verdict
    cand.report = report
    return report
