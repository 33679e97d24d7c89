"""Problem generators, baselines and Monte-Carlo sweeps.

Three measurement families are supported: i.i.d. Gaussian (compressive
sensing), the first ``M`` rows of the orthonormal DCT-II, and full
convolution with a length-``L`` moving-average filter. Signals are
Bernoulli-Gaussian and the noise level is set from a target SNR
``10 log10(||A x0||^2 / (M sigma^2))``.

Every realization draws from ``default_rng(base_seed + r)``, so sweep
results do not depend on the number of worker processes or their order.
"""

import csv
import dataclasses
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.fft
import scipy.linalg

from .linalg import operator_norm
from .solvers import SolveOutcome, SolverConfig, Status, adaptive_ista, ista_fixed
from .thresholding import MAD_TO_SIGMA, median_abs, soft

__all__ = [
    "FAMILIES",
    "METHODS",
    "InvalidSpec",
    "ProblemSpec",
    "ProblemInstance",
    "SweepConfig",
    "SweepResult",
    "generate",
    "measurement_matrix",
    "oracle_lasso_baseline",
    "amp_baseline",
    "run_method",
    "sweep",
    "write_sweep",
    "log_histogram",
    "load_config",
]

FAMILIES = ("Gaussian", "DCT", "Deconv")
METHODS = ("mad", "oracle_lasso", "amp", "ksparse")
HIST_BINS = 30


class InvalidSpec(ValueError):
    pass


def _family(name):
    for f in FAMILIES:
        if str(name).lower() == f.lower():
            return f
    raise InvalidSpec(f"unknown family {name!r}; expected one of {FAMILIES}")


@dataclass(frozen=True)
class ProblemSpec:
    family: str = "Gaussian"
    N: int = 256
    undersampling: float = 0.5
    filter_length: int = 10
    rho: float = 0.1
    snr_db: float = 20.0
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "family", _family(self.family))
        if not (isinstance(self.N, (int, np.integer)) and self.N >= 1):
            raise InvalidSpec(f"N must be a positive integer, got {self.N!r}")
        if not 0 < self.undersampling <= 1:
            raise InvalidSpec(f"undersampling must lie in (0, 1], got {self.undersampling}")
        if not (isinstance(self.filter_length, (int, np.integer)) and self.filter_length >= 1):
            raise InvalidSpec(f"filter_length must be a positive integer, got {self.filter_length!r}")
        if not 0 < self.rho < 1:
            raise InvalidSpec(f"rho must lie in (0, 1), got {self.rho}")
        if math.isnan(self.snr_db):
            raise InvalidSpec("snr_db is NaN")
        if not (isinstance(self.seed, (int, np.integer)) and 0 <= self.seed < 2 ** 64):
            raise InvalidSpec(f"seed must be an unsigned 64-bit integer, got {self.seed!r}")
        if self.family != "Deconv" and self.M < 1:
            raise InvalidSpec(f"undersampling {self.undersampling} leaves no measurements")

    @property
    def M(self):
        if self.family == "Deconv":
            return self.N + self.filter_length - 1
        return int(round(self.undersampling * self.N))


@dataclass(frozen=True)
class ProblemInstance:
    spec: ProblemSpec
    A: np.ndarray
    x0: np.ndarray
    noise: np.ndarray
    y: np.ndarray
    sigma: float


def measurement_matrix(spec, rng=None):
    """The ``M x N`` matrix of ``spec``; ``rng`` is used only by Gaussian."""
    N, M = spec.N, spec.M
    if spec.family == "Gaussian":
        rng = np.random.default_rng(spec.seed) if rng is None else rng
        return rng.standard_normal((M, N)) / math.sqrt(M)
    if spec.family == "DCT":
        # columns of the orthonormal DCT-II of the identity give the full matrix
        C = scipy.fft.dct(np.eye(N), type=2, norm="ortho", axis=0)
        return np.ascontiguousarray(C[:M])
    h = np.full(spec.filter_length, 1.0 / spec.filter_length)
    return scipy.linalg.convolution_matrix(h, N, mode="full")


def generate(spec):
    """Draw ``A`` (Gaussian family), ``x0`` and noise from ``default_rng(seed)``."""
    rng = np.random.default_rng(spec.seed)
    A = measurement_matrix(spec, rng)
    N, M = spec.N, spec.M
    mask = rng.random(N) < spec.rho
    x0 = np.where(mask, rng.standard_normal(N) / math.sqrt(spec.rho), 0.0)
    e = rng.standard_normal(M)
    clean = A @ x0
    power = float(clean @ clean) / M
    sigma = math.sqrt(power / 10 ** (spec.snr_db / 10)) if power > 0 else 0.0
    noise = sigma * e
    return ProblemInstance(spec=spec, A=A, x0=x0, noise=noise, y=clean + noise, sigma=sigma)


def oracle_lasso_baseline(inst, c, cfg=None, norm=None):
    """LASSO by fixed-threshold ISTA at ``lam = c * sigma`` using the true noise level."""
    if not c > 0:
        raise ValueError(f"c must be positive, got {c}")
    if not inst.sigma > 0:
        raise ValueError("oracle LASSO needs a positive noise level; sigma is 0")
    return ista_fixed(inst.A, inst.y, c * inst.sigma, cfg, norm=norm)


def amp_baseline(inst, gamma_amp=1.2 * MAD_TO_SIGMA, max_iter=10_000, tol=1e-10,
                 divergence_bound=1e12):
    """Approximate message passing with a MAD threshold on the pseudo-data.

    ``x <- soft(x + A^T z, theta)`` with ``theta = gamma_amp * median|x + A^T z|``
    and residual ``z <- y - A x + z ||x||_0 / M``.
    """
    A, y = inst.A, inst.y
    M, N = A.shape
    x = np.zeros(N)
    z = y.copy()
    status = Status.MAX_ITER
    theta = 0.0
    k = 0
    for k in range(1, max_iter + 1):
        r = x + A.T @ z
        theta = gamma_amp * median_abs(r).value
        x_new = soft(r, theta)
        xnorm = np.max(np.abs(x_new), initial=0.0)
        if not np.isfinite(xnorm) or xnorm > divergence_bound:
            x = x_new
            status = Status.DIVERGED
            break
        z = y - A @ x_new + z * (np.count_nonzero(x_new) / M)
        step = float(np.max(np.abs(x_new - x), initial=0.0))
        scale = max(1.0, float(np.max(np.abs(x), initial=0.0)))
        x = x_new
        if not np.all(np.isfinite(z)):
            status = Status.DIVERGED
            break
        if step <= tol * scale:
            status = Status.CONVERGED
            break
    return SolveOutcome(x_star=x, status=status, iterations=k, lambda_star=float(theta),
                        fixed_point_residual=float("nan"), mu=1.0)


@dataclass(frozen=True)
class SweepConfig:
    """Settings of a realization sweep, loadable from JSON.

    ``gamma`` and ``lasso_c`` default by family: ``1.2 * 1.4826`` and
    ``1.2`` for Gaussian and DCT, ``1.4826`` and ``1.0`` for Deconv.
    """

    family: str = "Gaussian"
    N: int = 256
    undersampling: float = 0.5
    filter_length: int = 10
    rho: float = 0.1
    snr_db: tuple = (30.0, 20.0, 10.0)
    methods: tuple = ("mad", "oracle_lasso")
    n_realizations: int = 100
    base_seed: int = 0
    gamma: float | None = None
    lasso_c: float | None = None
    gamma_amp: float = 1.2 * MAD_TO_SIGMA
    max_iter: int = 20_000
    amp_max_iter: int = 2_000
    tol: float = 1e-8

    def __post_init__(self):
        object.__setattr__(self, "family", _family(self.family))
        snr = self.snr_db
        snr = (snr,) if isinstance(snr, (int, float)) else tuple(snr)
        object.__setattr__(self, "snr_db", tuple(float(s) for s in snr))
        object.__setattr__(self, "methods", tuple(self.methods))
        bad = [m for m in self.methods if m not in METHODS]
        if bad:
            raise InvalidSpec(f"unknown methods {bad}; expected a subset of {METHODS}")
        if not self.methods or not self.snr_db:
            raise InvalidSpec("methods and snr_db must be non-empty")
        if not (isinstance(self.n_realizations, int) and self.n_realizations >= 1):
            raise InvalidSpec("n_realizations must be a positive integer")
        if self.gamma is None:
            object.__setattr__(self, "gamma",
                               MAD_TO_SIGMA if self.family == "Deconv" else 1.2 * MAD_TO_SIGMA)
        if self.lasso_c is None:
            object.__setattr__(self, "lasso_c", 1.0 if self.family == "Deconv" else 1.2)
        if not self.gamma > 1:
            raise InvalidSpec(f"gamma must exceed 1, got {self.gamma}")
        # validate the problem fields once
        self.problem(self.snr_db[0], 0)

    def problem(self, snr_db, r):
        return ProblemSpec(family=self.family, N=self.N, undersampling=self.undersampling,
                           filter_length=self.filter_length, rho=self.rho, snr_db=snr_db,
                           seed=self.base_seed + r)

    def to_dict(self):
        d = dataclasses.asdict(self)
        d["snr_db"] = list(self.snr_db)
        d["methods"] = list(self.methods)
        return d


def load_config(source):
    """Build a :class:`SweepConfig` from a dict or a JSON file path; unknown keys are rejected."""
    if isinstance(source, dict):
        data = source
    else:
        with open(source) as fh:
            try:
                data = json.load(fh)
            except json.JSONDecodeError as exc:
                raise InvalidSpec(f"{source}: invalid JSON ({exc})") from None
    if not isinstance(data, dict):
        raise InvalidSpec("config must be a JSON object")
    known = {f.name for f in dataclasses.fields(SweepConfig)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise InvalidSpec(f"unknown config keys: {unknown}")
    try:
        return SweepConfig(**data)
    except TypeError as exc:
        raise InvalidSpec(str(exc)) from None


def run_method(method, inst, cfg, norm=None):
    """Run one estimator on ``inst``; returns the :class:`SolveOutcome`."""
    scfg = SolverConfig(gamma=cfg.gamma, max_iter=cfg.max_iter, tol=cfg.tol)
    if method == "mad":
        return adaptive_ista(inst.A, inst.y, scfg, norm=norm)
    if method == "oracle_lasso":
        return oracle_lasso_baseline(inst, cfg.lasso_c, scfg, norm=norm)
    if method == "amp":
        return amp_baseline(inst, cfg.gamma_amp, max_iter=cfg.amp_max_iter, tol=cfg.tol)
    if method == "ksparse":
        K = max(1, int(np.count_nonzero(inst.x0)))
        K = min(K, inst.spec.N - 1)
        return adaptive_ista(inst.A, inst.y, dataclasses.replace(scfg, rule="ksparse", K=K),
                             norm=norm)
    raise InvalidSpec(f"unknown method {method!r}")


def _realization(args):
    cfg, snr, r = args
    inst = generate(cfg.problem(snr, r))
    norm = operator_norm(inst.A)
    rows = []
    for method in cfg.methods:
        try:
            out = run_method(method, inst, cfg, norm)
            err = out.x_star - inst.x0
            mse = float(err @ err) / inst.spec.N
            rows.append((method, mse, out.status.value, out.iterations))
        except (ValueError, ArithmeticError) as exc:
            rows.append((method, float("nan"), f"Failed: {exc}", 0))
    return snr, r, rows


@dataclass
class SweepResult:
    """Outcome of one (snr, method) cell of a sweep.

    ``mean_mse`` averages realizations that did not diverge or fail;
    ``histogram`` counts every finite MSE.
    """

    family: str
    N: int
    snr_db: float
    method: str
    mse: list[float] = field(default_factory=list)
    status: list[str] = field(default_factory=list)
    iterations: list[int] = field(default_factory=list)

    @property
    def count(self):
        return len(self.mse)

    def _usable(self):
        ok = [m for m, s in zip(self.mse, self.status)
              if s in (Status.CONVERGED.value, Status.MAX_ITER.value) and math.isfinite(m)]
        return np.array(ok)

    @property
    def mean_mse(self):
        v = self._usable()
        return float(v.mean()) if v.size else float("nan")

    @property
    def std_mse(self):
        v = self._usable()
        return float(v.std(ddof=1)) if v.size > 1 else float("nan")

    @property
    def histogram(self):
        return log_histogram(self.mse)

    def summary(self):
        edges, counts = self.histogram
        statuses = {}
        for s in self.status:
            statuses[s] = statuses.get(s, 0) + 1
        return {
            "family": self.family, "N": self.N, "snr_db": self.snr_db,
            "method": self.method, "count": self.count, "mean_mse": self.mean_mse,
            "std_mse": self.std_mse, "status_counts": statuses,
            "histogram": {"edges": edges.tolist(), "counts": counts.tolist()},
        }


def log_histogram(values, bins=HIST_BINS):
    """Counts of the finite positive ``values`` in ``bins`` log-spaced bins over their range."""
    v = np.asarray([x for x in values if math.isfinite(x) and x > 0], dtype=float)
    if v.size == 0:
        return np.zeros(0), np.zeros(0, dtype=int)
    lo, hi = float(v.min()), float(v.max())
    if lo == hi:
        lo, hi = lo / 1.01, hi * 1.01
    edges = np.logspace(math.log10(lo), math.log10(hi), bins + 1)
    edges[0], edges[-1] = lo, hi
    counts, _ = np.histogram(v, bins=edges)
    return edges, counts


def sweep(cfg, jobs=1):
    """Run every (snr, realization) pair and collect per-method results.

    Work units are independent and seeded by realization index, so the
    result does not depend on ``jobs``. Returns a list of
    :class:`SweepResult` ordered by snr, then method.
    """
    tasks = [(cfg, snr, r) for snr in cfg.snr_db for r in range(cfg.n_realizations)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            done = list(pool.map(_realization, tasks, chunksize=4))
    else:
        done = [_realization(t) for t in tasks]
    done.sort(key=lambda t: (cfg.snr_db.index(t[0]), t[1]))
    cells = {(snr, m): SweepResult(cfg.family, cfg.N, snr, m)
             for snr in cfg.snr_db for m in cfg.methods}
    for snr, r, rows in done:
        for method, mse, status, iters in rows:
            cell = cells[(snr, method)]
            cell.mse.append(mse)
            cell.status.append(status)
            cell.iterations.append(iters)
    return [cells[(snr, m)] for snr in cfg.snr_db for m in cfg.methods]


def write_sweep(results, csv_path, json_path, cfg=None):
    """Long-format CSV plus JSON summary of a sweep."""
    with open(csv_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["family", "N", "snr_db", "method", "realization", "mse", "status", "iterations"])
        for res in results:
            for r, (mse, st, it) in enumerate(zip(res.mse, res.status, res.iterations)):
                w.writerow([res.family, res.N, f"{res.snr_db:.17g}", res.method, r,
                            f"{mse:.17g}", st, it])
    summary = {"results": [res.summary() for res in results]}
    if cfg is not None:
        summary["config"] = cfg.to_dict()
    with open(json_path, "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
