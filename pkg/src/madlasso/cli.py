"""Command-line front end: ``madlasso {solve,path,fixed-points,recur,experiment}``.

Exit codes: 0 converged or success, 1 malformed input or arguments,
2 iteration limit reached, 3 diverged, 4 degenerate path.
"""

import argparse
import json
import math
import os
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .experiments import InvalidSpec, load_config, sweep, write_sweep
from .linalg import operator_norm
from .matrix_io import MalformedInput, file_sha256, fmt, read_matrix, read_vector, write_vector
from .path import DegeneratePath, candidates_for_gamma, lasso_path
from .recurrence import detect_piecewise, run_recurrence, write_log_csv
from .solvers import SolverConfig, Status, adaptive_ista, ista_fixed, parse_rule

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_MAXITER = 2
EXIT_DIVERGED = 3
EXIT_DEGENERATE = 4

STATUS_EXIT = {Status.CONVERGED: EXIT_OK, Status.MAX_ITER: EXIT_MAXITER,
               Status.DIVERGED: EXIT_DIVERGED}
SEED_ENV = "MADLASSO_SEED"


class UsageError(Exception):
    pass


class Parser(argparse.ArgumentParser):
    """Argument parser that exits with code 1 on usage errors."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


def _load_problem(args):
    A = read_matrix(args.A)
    y = read_vector(args.y)
    if A.shape[0] != y.size:
        raise MalformedInput(f"{args.y}: length {y.size} does not match {args.A} with {A.shape[0]} rows")
    return A, y


def _write_manifest(path, command, config, inputs, started):
    manifest = {
        "command": command,
        "config": config,
        "inputs": {str(p): file_sha256(p) for p in inputs if p is not None},
        "version": __version__,
        "duration_s": round(time.perf_counter() - started, 6),
    }
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _manifest_path(out):
    return str(out) + ".manifest.json"


def _jsonable(v):
    if isinstance(v, float) and not math.isfinite(v):
        return str(v)
    return v


def _solver_config(args):
    rule = parse_rule(args.rule)
    if rule["rule"] == "mad" and args.gamma is None:
        raise UsageError("--gamma is required with rule mad")
    kwargs = dict(rule, max_iter=args.max_iter, tol=args.tol, mu=args.mu,
                  trace=args.trace is not None)
    if args.gamma is not None:
        kwargs["gamma"] = args.gamma
    return SolverConfig(**kwargs)


def cmd_solve(args):
    started = time.perf_counter()
    cfg = _solver_config(args)
    A, y = _load_problem(args)
    norm = operator_norm(A)
    if cfg.rule == "fixed":
        out = ista_fixed(A, y, cfg.lam, cfg, norm=norm)
    else:
        out = adaptive_ista(A, y, cfg, norm=norm)
    write_vector(args.out, out.x_star)
    if args.trace is not None:
        with open(args.trace, "w", newline="") as fh:
            fh.write("k,threshold,support_size,median_index,step_residual,fixed_point_residual\n")
            for r in out.trace:
                fh.write(f"{r.k},{fmt(r.threshold)},{r.support.size},{r.median_index},"
                         f"{fmt(r.step_residual)},{fmt(r.fixed_point_residual)}\n")
    config = {k: _jsonable(v) for k, v in vars(cfg).items()}
    config["mu"] = out.mu
    _write_manifest(_manifest_path(args.out), "solve", config, [args.A, args.y], started)
    print(json.dumps({"status": out.status.value, "lambda_star": _jsonable(out.lambda_star),
                      "iterations": out.iterations,
                      "fixed_point_residual": _jsonable(out.fixed_point_residual)}))
    return STATUS_EXIT[out.status]


def _segment_rows(segments):
    yield ["segment_id", "lambda_hi", "lambda_lo", "support_size", "support", "signs",
           "median_index", "a", "b"]
    for s in segments:
        yield [str(s.segment_id), fmt(s.lambda_hi), fmt(s.lambda_lo), str(len(s.equicorrelation)),
               ";".join(str(i) for i in s.equicorrelation),
               ";".join(str(int(v)) for v in s.signs),
               str(s.median_index), fmt(s.a), fmt(s.b)]


def _gamma_samples(segments, per_segment):
    rows = []
    for s in segments:
        hi = s.lambda_hi if math.isfinite(s.lambda_hi) else 2.0 * s.lambda_lo
        for lam in np.linspace(s.lambda_lo, hi, per_segment):
            denom = abs(s.a * lam + s.b)
            g = lam / denom if denom > 0 else math.inf
            rows.append((s.segment_id, lam, g))
    return rows


def cmd_path(args):
    started = time.perf_counter()
    A, y = _load_problem(args)
    lam_max = float(np.max(np.abs(A.T @ y)))
    if args.lambda_min > lam_max:
        print(f"warning: lambda-min {args.lambda_min:g} exceeds lambda_max {lam_max:g}; "
              "the path is empty", file=sys.stderr)
        segments = []
    else:
        segments = lasso_path(A, y, lambda_min=args.lambda_min, full=args.full)
    with open(args.segments, "w", newline="") as fh:
        for row in _segment_rows(segments):
            fh.write(",".join(row) + "\n")
    if args.gamma_grid is not None:
        with open(args.gamma_grid, "w", newline="") as fh:
            fh.write("segment_id,lambda,gamma\n")
            for sid, lam, g in _gamma_samples(segments, args.grid_points):
                fh.write(f"{sid},{fmt(lam)},{fmt(g)}\n")
    config = {"lambda_min": args.lambda_min, "full": args.full, "grid_points": args.grid_points}
    _write_manifest(_manifest_path(args.segments), "path", config, [args.A, args.y], started)
    return EXIT_OK


def _candidate_dict(c):
    return {
        "lambda_star": c.lambda_star,
        "gamma": c.gamma,
        "segment_id": c.segment_id,
        "support": [int(i) for i in c.support],
        "x_star": [float(v) for v in c.x_star],
        "a": c.a,
        "b": c.b,
        "median_index": c.median_index,
        "gamma_slope_positive": c.gamma_slope_positive,
        "verdict": c.verdict.value if c.verdict is not None else None,
        "stability": c.report.to_dict() if c.report is not None else None,
    }


def cmd_fixed_points(args):
    started = time.perf_counter()
    if not args.gamma > 1:
        raise UsageError(f"--gamma must exceed 1, got {args.gamma}")
    A, y = _load_problem(args)
    norm = operator_norm(A)
    mu = SolverConfig(gamma=args.gamma, mu=args.mu).resolve_mu(A, norm)
    segments = lasso_path(A, y, full=args.full)
    cands = candidates_for_gamma(A, y, segments, args.gamma, mu=mu)
    payload = {"gamma": args.gamma, "mu": mu, "candidates": [_candidate_dict(c) for c in cands]}
    with open(args.out, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    config = {"gamma": args.gamma, "mu": mu, "full": args.full}
    _write_manifest(_manifest_path(args.out), "fixed-points", config, [args.A, args.y], started)
    return EXIT_OK


def cmd_recur(args):
    started = time.perf_counter()
    if not args.gamma > 1:
        raise UsageError(f"--gamma must exceed 1, got {args.gamma}")
    A, y = _load_problem(args)
    x0 = read_vector(args.x0) if args.x0 is not None else None
    if x0 is not None and x0.size != A.shape[1]:
        raise MalformedInput(f"{args.x0}: length {x0.size}, expected {A.shape[1]}")
    cfg = SolverConfig(gamma=args.gamma, mu=args.mu)
    log = run_recurrence(A, y, cfg, args.n_iter, x0=x0)
    write_log_csv(log, args.log)
    fits = detect_piecewise(log) if len(log) >= 2 else []
    summary = {
        "iterations": len(log),
        "diverged": log.diverged,
        "max_z_residual": log.max_z_residual,
        "segments": [{"segment_id": f.segment_id, "start_k": f.start_k, "end_k": f.end_k,
                      "radius": f.radius, "fitted_rate": _jsonable(f.fitted_rate),
                      "at_fixed_point": f.at_fixed_point} for f in fits],
    }
    config = {"gamma": args.gamma, "mu": log.mu, "n_iter": args.n_iter}
    _write_manifest(_manifest_path(args.log), "recur", config, [args.A, args.y, args.x0], started)
    print(json.dumps(summary))
    return EXIT_OK


def _resolve_seed(flag, config_data):
    if flag is not None:
        return flag
    env = os.environ.get(SEED_ENV)
    if env not in (None, ""):
        try:
            return int(env)
        except ValueError:
            raise UsageError(f"{SEED_ENV}={env!r} is not an integer") from None
    return int(config_data.get("base_seed", 0))


def cmd_experiment(args):
    started = time.perf_counter()
    try:
        with open(args.config) as fh:
            data = json.load(fh)
    except OSError as exc:
        raise MalformedInput(f"{args.config}: cannot open ({exc.strerror})") from None
    except json.JSONDecodeError as exc:
        raise MalformedInput(f"{args.config}: invalid JSON ({exc})") from None
    if not isinstance(data, dict):
        raise MalformedInput(f"{args.config}: config must be a JSON object")
    cfg = load_config(data)
    cfg = replace(cfg, base_seed=_resolve_seed(args.seed, data))
    if args.jobs < 1:
        raise UsageError("--jobs must be positive")
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    results = sweep(cfg, jobs=args.jobs)
    write_sweep(results, out_dir / "results.csv", out_dir / "summary.json", cfg)
    _write_manifest(out_dir / "manifest.json", "experiment", cfg.to_dict(), [args.config],
                    started)
    return EXIT_OK


def build_parser():
    p = Parser(prog="madlasso", description="ISTA with a MAD threshold: solver and analysis tools")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def problem(sp):
        sp.add_argument("--A", required=True, help="measurement matrix CSV")
        sp.add_argument("--y", required=True, help="observation vector CSV")

    s = sub.add_parser("solve", help="run the adaptive or fixed-threshold iteration")
    problem(s)
    s.add_argument("--gamma", type=float)
    s.add_argument("--mu", type=float)
    s.add_argument("--rule", default="mad", help="mad, ksparse:K or fixed:LAMBDA")
    s.add_argument("--tol", type=float, default=1e-10)
    s.add_argument("--max-iter", type=int, default=100_000)
    s.add_argument("--trace", help="per-iteration CSV log")
    s.add_argument("--out", required=True, help="solution CSV")
    s.set_defaults(func=cmd_solve)

    s = sub.add_parser("path", help="LASSO path segments and gamma(lambda) samples")
    problem(s)
    s.add_argument("--lambda-min", type=float, default=0.0)
    s.add_argument("--segments", required=True)
    s.add_argument("--gamma-grid")
    s.add_argument("--grid-points", type=int, default=50, help="samples per segment")
    s.add_argument("--full", action="store_true", help="do not stop at support size N/2")
    s.set_defaults(func=cmd_path)

    s = sub.add_parser("fixed-points", help="candidate fixed points with stability verdicts")
    problem(s)
    s.add_argument("--gamma", type=float, required=True)
    s.add_argument("--mu", type=float)
    s.add_argument("--full", action="store_true")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_fixed_points)

    s = sub.add_parser("recur", help="matrix-recurrence replay and per-segment rates")
    problem(s)
    s.add_argument("--gamma", type=float, required=True)
    s.add_argument("--mu", type=float)
    s.add_argument("--x0")
    s.add_argument("--n-iter", type=int, default=200)
    s.add_argument("--log", required=True)
    s.set_defaults(func=cmd_recur)

    s = sub.add_parser("experiment", help="Monte-Carlo sweep from a JSON config")
    s.add_argument("--config", required=True)
    s.add_argument("--out-dir", required=True)
    s.add_argument("--jobs", type=int, default=1)
    s.add_argument("--seed", type=int, help=f"base seed; overrides ${SEED_ENV} and the config")
    s.set_defaults(func=cmd_experiment)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except DegeneratePath as exc:
        knot = f" (knot lambda={exc.knot:.17g})" if exc.knot is not None else ""
        print(f"error: degenerate path: {exc}{knot}", file=sys.stderr)
        return EXIT_DEGENERATE
    except (UsageError, MalformedInput, InvalidSpec) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (ValueError, ArithmeticError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
