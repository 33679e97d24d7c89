"""ISTA with a fixed threshold and adaptive ISTA with data-driven thresholds."""

from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

from .linalg import operator_norm
from .thresholding import (MAD_TO_SIGMA, check_fixed_point, ksparse_threshold,
                           mad_threshold, median_abs, soft)

__all__ = [
    "MU_CAP",
    "Status",
    "SolverConfig",
    "IterateRecord",
    "SolveOutcome",
    "parse_rule",
    "kkt_residual",
    "lasso_objective",
    "ista_fixed",
    "adaptive_ista",
    "warm_start",
]

MU_CAP = 1.99
RULES = ("mad", "ksparse", "fixed")


class Status(str, Enum):
    CONVERGED = "Converged"
    MAX_ITER = "MaxIter"
    DIVERGED = "Diverged"


@dataclass(frozen=True)
class SolverConfig:
    """Iteration settings.

    ``mu=None`` means ``1/||A||_2^2``; an explicit step must stay at or
    below ``1.99/||A||_2^2``. ``rule`` is ``"mad"``, ``"ksparse"`` (needs
    ``K``) or ``"fixed"`` (needs ``lam``).
    """

    gamma: float = 1.2 * MAD_TO_SIGMA
    mu: float | None = None
    max_iter: int = 100_000
    tol: float = 1e-10
    divergence_bound: float = 1e12
    rule: str = "mad"
    K: int | None = None
    lam: float | None = None
    trace: bool = False

    def __post_init__(self):
        if self.rule not in RULES:
            raise ValueError(f"unknown rule {self.rule!r}; expected one of {RULES}")
        if self.rule == "mad" and not self.gamma > 1:
            raise ValueError(f"gamma must exceed 1, got {self.gamma}")
        if self.rule == "ksparse" and (self.K is None or self.K < 1):
            raise ValueError("ksparse rule needs a positive K")
        if self.rule == "fixed" and (self.lam is None or self.lam < 0):
            raise ValueError("fixed rule needs a nonnegative lam")
        if self.mu is not None and not self.mu > 0:
            raise ValueError(f"mu must be positive, got {self.mu}")
        if self.max_iter < 1 or not self.tol > 0 or not self.divergence_bound > 0:
            raise ValueError("max_iter, tol and divergence_bound must be positive")

    def resolve_mu(self, A, norm=None):
        """Step size for ``A``; checks the cap ``mu <= 1.99/||A||^2``."""
        if norm is None:
            norm = operator_norm(A)
        L = norm * norm
        if self.mu is None:
            return 1.0 / L
        if self.mu > MU_CAP / L * (1 + 1e-12):
            raise ValueError(
                f"mu={self.mu:g} exceeds {MU_CAP}/||A||^2 = {MU_CAP / L:g}")
        return float(self.mu)


def parse_rule(text):
    """Parse ``mad``, ``ksparse:K`` or ``fixed:LAMBDA`` into config kwargs."""
    name, _, arg = text.partition(":")
    name = name.strip().lower()
    if name == "mad" and not arg:
        return {"rule": "mad"}
    if name == "ksparse" and arg:
        return {"rule": "ksparse", "K": int(arg)}
    if name == "fixed" and arg:
        return {"rule": "fixed", "lam": float(arg)}
    raise ValueError(f"cannot parse rule {text!r}")


@dataclass(frozen=True)
class IterateRecord:
    k: int
    x: np.ndarray
    threshold: float
    support: np.ndarray
    median_index: int
    step_residual: float
    fixed_point_residual: float


@dataclass
class SolveOutcome:
    x_star: np.ndarray
    status: Status
    iterations: int
    lambda_star: float
    fixed_point_residual: float
    mu: float
    trace: list[IterateRecord] | None = field(default=None, repr=False)

    @property
    def converged(self):
        return self.status is Status.CONVERGED


def lasso_objective(A, y, x, lam):
    r = A @ x - y
    return 0.5 * float(r @ r) + lam * float(np.sum(np.abs(x)))


def kkt_residual(A, y, x, lam):
    """Largest violation of the LASSO optimality conditions at ``x``."""
    g = -A.T @ (A @ x - y)
    on = x != 0
    on_v = np.max(np.abs(g[on] - lam * np.sign(x[on])), initial=0.0)
    off_v = np.max(np.abs(g[~on]) - lam, initial=0.0)
    return float(max(on_v, off_v, 0.0))


def _check_inputs(A, y, x0=None):
    A = np.asarray(A, dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    if A.ndim != 2 or A.shape[0] != y.size:
        raise ValueError(f"A{A.shape} and y({y.size}) are inconsistent")
    if x0 is None:
        x0 = np.zeros(A.shape[1])
    else:
        x0 = np.asarray(x0, dtype=float).ravel().copy()
        if x0.size != A.shape[1]:
            raise ValueError(f"x0 has length {x0.size}, expected {A.shape[1]}")
    return A, y, x0


def _final_residual(A, y, x, cfg, lam_star):
    if cfg.rule == "mad":
        return check_fixed_point(A, y, x, cfg.gamma, np.inf).residual
    return kkt_residual(A, y, x, lam_star)


def _confirmed(A, y, x, cfg, lam_k):
    if cfg.rule == "mad":
        return check_fixed_point(A, y, x, cfg.gamma, 10 * cfg.tol).passes
    if cfg.rule == "fixed":
        return kkt_residual(A, y, x, cfg.lam) <= 10 * cfg.tol
    return True


def _run(A, y, cfg, x0, norm=None):
    A, y, x = _check_inputs(A, y, x0)
    mu = cfg.resolve_mu(A, norm)
    Aty = A.T @ y
    trace = [] if cfg.trace else None

    if cfg.rule == "mad":
        def threshold(z):
            return mad_threshold(z, cfg.gamma)
    elif cfg.rule == "ksparse":
        def threshold(z):
            return ksparse_threshold(z, cfg.K)
    else:
        t_fixed = mu * cfg.lam

        def threshold(z):
            return None

    status = Status.MAX_ITER
    last_t = mu * cfg.lam if cfg.rule == "fixed" else 0.0
    k = 0
    for k in range(1, cfg.max_iter + 1):
        z = x - mu * (A.T @ (A @ x) - Aty)
        res = threshold(z)
        if res is None:
            x_new = soft(z, t_fixed)
        else:
            x_new = res.output
            last_t = res.threshold
        xnorm = np.max(np.abs(x_new), initial=0.0)
        if not np.isfinite(xnorm) or xnorm > cfg.divergence_bound:
            x = x_new
            status = Status.DIVERGED
            break
        step = float(np.max(np.abs(x_new - x), initial=0.0))
        if trace is not None:
            lam_k = last_t / mu
            fp = (check_fixed_point(A, y, x_new, cfg.gamma, np.inf).residual
                  if cfg.rule == "mad" else kkt_residual(A, y, x_new, lam_k))
            trace.append(IterateRecord(
                k=k, x=x_new, threshold=last_t, support=np.flatnonzero(x_new),
                median_index=res.median.index if res is not None else -1,
                step_residual=step, fixed_point_residual=fp))
        scale = max(1.0, float(np.max(np.abs(x), initial=0.0)))
        x = x_new
        # a small step only bounds the error by step / (1 - rate); confirm
        # with the optimality residual before declaring convergence
        if step <= cfg.tol * scale and _confirmed(A, y, x, cfg, last_t / mu):
            status = Status.CONVERGED
            break

    if status is Status.DIVERGED:
        lam_star, fp = float("nan"), float("nan")
    else:
        if cfg.rule == "mad":
            lam_star = cfg.gamma * median_abs(-A.T @ (A @ x - y)).value
        elif cfg.rule == "fixed":
            lam_star = float(cfg.lam)
        else:
            lam_star = last_t / mu
        fp = _final_residual(A, y, x, cfg, lam_star)
    return SolveOutcome(x_star=x, status=status, iterations=k, lambda_star=lam_star,
                        fixed_point_residual=fp, mu=mu, trace=trace)


def ista_fixed(A, y, lam, cfg=None, x0=None, norm=None):
    """Classical ISTA for the LASSO at a fixed ``lam``.

    ``cfg`` supplies step size and stopping settings; its rule is replaced
    by ``fixed`` at ``lam``. ``norm`` may carry a precomputed ``||A||_2``.
    """
    cfg = replace(cfg or SolverConfig(), rule="fixed", lam=float(lam))
    return _run(A, y, cfg, x0, norm)


def adaptive_ista(A, y, cfg=None, norm=None):
    """Adaptive ISTA ``x <- T(x - mu A^T (A x - y))`` started from zero.

    The threshold is ``gamma * median(|z|)`` for the ``mad`` rule or the
    (K+1)-th largest magnitude for ``ksparse``. The iteration has no descent
    guarantee; iterates whose sup-norm exceeds ``divergence_bound`` end the
    run with status ``Diverged``.
    """
    cfg = cfg or SolverConfig()
    if cfg.rule == "fixed":
        raise ValueError("adaptive_ista needs an adaptive rule; use ista_fixed")
    return _run(A, y, cfg, None, norm)


def warm_start(A, y, cfg, x0, norm=None):
    """Adaptive ISTA from a caller-supplied initial iterate."""
    cfg = cfg or SolverConfig()
    if cfg.rule == "fixed":
        raise ValueError("warm_start needs an adaptive rule; use ista_fixed")
    return _run(A, y, cfg, x0, norm)
