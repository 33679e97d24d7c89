import numpy as np
import pytest

from madlasso.linalg import operator_norm
from madlasso.path import candidates_for_gamma, lasso_path
from madlasso.solvers import (MU_CAP, SolverConfig, Status, adaptive_ista, ista_fixed,
                              kkt_residual, lasso_objective, parse_rule, warm_start)
from madlasso.thresholding import check_fixed_point, mad_threshold, soft

from oracles import cd_lasso, random_instance


def test_config_validation():
    with pytest.raises(ValueError):
        SolverConfig(gamma=1.0)
    with pytest.raises(ValueError):
        SolverConfig(rule="ksparse")
    with pytest.raises(ValueError):
        SolverConfig(rule="fixed")
    with pytest.raises(ValueError):
        SolverConfig(mu=-1.0)
    with pytest.raises(ValueError):
        SolverConfig(rule="other")


def test_step_size_default_and_cap():
    A = 2.0 * np.eye(3)
    assert SolverConfig().resolve_mu(A) == pytest.approx(0.25)
    assert SolverConfig(mu=MU_CAP / 4).resolve_mu(A) == pytest.approx(MU_CAP / 4)
    with pytest.raises(ValueError):
        SolverConfig(mu=0.5).resolve_mu(A)


def test_parse_rule():
    assert parse_rule("mad") == {"rule": "mad"}
    assert parse_rule("ksparse:4") == {"rule": "ksparse", "K": 4}
    assert parse_rule("fixed:0.5") == {"rule": "fixed", "lam": 0.5}
    with pytest.raises(ValueError):
        parse_rule("fixed")


def test_ista_identity_design_one_step():
    y = np.array([2.0, -0.3, 0.9, -1.4])
    out = ista_fixed(np.eye(4), y, 0.5, SolverConfig(mu=1.0, trace=True))
    assert out.trace[0].x.tolist() == soft(y, 0.5).tolist()
    assert out.x_star.tolist() == soft(y, 0.5).tolist()
    assert out.converged


def test_ista_null_solution_above_lambda_max():
    A, y = random_instance(0, 10, 20)
    lam = np.max(np.abs(A.T @ y))
    out = ista_fixed(A, y, lam)
    assert out.converged and not np.any(out.x_star)


def test_ista_matches_coordinate_descent():
    A, y = random_instance(1, 20, 40)
    lam = 0.1 * np.max(np.abs(A.T @ y))
    out = ista_fixed(A, y, lam, SolverConfig(tol=1e-12))
    ref = cd_lasso(A, y, lam)
    assert out.converged
    assert lasso_objective(A, y, out.x_star, lam) == pytest.approx(
        lasso_objective(A, y, ref, lam), rel=1e-8)
    assert kkt_residual(A, y, out.x_star, lam) <= 10 * 1e-12


def test_ista_objective_monotone():
    A, y = random_instance(2, 15, 30)
    lam = 0.2 * np.max(np.abs(A.T @ y))
    out = ista_fixed(A, y, lam, SolverConfig(trace=True, max_iter=300))
    vals = [lasso_objective(A, y, r.x, lam) for r in out.trace]
    assert all(b <= a + 1e-12 for a, b in zip(vals, vals[1:]))


def test_adaptive_identity_design():
    y = np.array([3.0, -0.2, 1.5, 0.4, -2.5, 0.1, 0.05])
    out = adaptive_ista(np.eye(7), y, SolverConfig(gamma=1.5, mu=1.0))
    assert out.converged and out.iterations <= 2
    assert out.x_star.tolist() == mad_threshold(y, 1.5).output.tolist()
    assert check_fixed_point(np.eye(7), y, out.x_star, 1.5, 1e-12).passes


def test_adaptive_zero_observation():
    out = adaptive_ista(np.random.default_rng(0).standard_normal((5, 8)), np.zeros(5))
    assert out.converged and out.iterations == 1 and not np.any(out.x_star)


def test_adaptive_rejects_fixed_rule():
    with pytest.raises(ValueError):
        adaptive_ista(np.eye(2), np.ones(2), SolverConfig(rule="fixed", lam=1.0))


def test_adaptive_converged_run_properties():
    A, y = random_instance(3, 20, 30)
    cfg = SolverConfig(gamma=1.7, trace=True)
    out = adaptive_ista(A, y, cfg)
    assert out.converged
    last = out.trace[-1]
    prev_scale = max(1.0, np.max(np.abs(out.trace[-2].x)))
    assert last.step_residual <= cfg.tol * prev_scale
    assert check_fixed_point(A, y, out.x_star, cfg.gamma, 10 * cfg.tol).passes
    g = -A.T @ (A @ out.x_star - y)
    assert out.lambda_star == pytest.approx(1.7 * np.sort(np.abs(g))[15])
    ks = [r.k for r in out.trace]
    assert ks == list(range(1, len(ks) + 1))


def test_mu_invariance_single_instance():
    A, y = random_instance(4, 20, 30)
    L = operator_norm(A) ** 2
    a = adaptive_ista(A, y, SolverConfig(gamma=1.5, mu=0.5 / L))
    b = adaptive_ista(A, y, SolverConfig(gamma=1.5, mu=1.8 / L))
    assert a.converged and b.converged
    assert np.max(np.abs(a.x_star - b.x_star)) <= 1e-6


def test_max_iter_status():
    A, y = random_instance(5, 20, 30)
    out = adaptive_ista(A, y, SolverConfig(max_iter=3))
    assert out.status is Status.MAX_ITER and out.iterations == 3


def test_divergence_detection():
    A, y = random_instance(6, 20, 30)
    out = adaptive_ista(A, y, SolverConfig(divergence_bound=1e-3))
    assert out.status is Status.DIVERGED
    assert np.isnan(out.lambda_star)


def test_ksparse_rule_run():
    A, y = random_instance(7, 20, 30)
    out = adaptive_ista(A, y, SolverConfig(rule="ksparse", K=5))
    assert out.converged
    assert np.count_nonzero(out.x_star) <= 5


def _candidates(seed, gamma):
    A, y = random_instance(seed, 20, 30, rho=0.2)
    norm = operator_norm(A)
    cands = candidates_for_gamma(A, y, lasso_path(A, y), gamma, mu=1.0 / norm ** 2)
    return A, y, norm, cands


def test_warm_start_at_stable_point():
    A, y, norm, cands = _candidates(1, 1.2 * 1.4826)
    stable = [c for c in cands if c.stable]
    assert stable
    for c in stable:
        cfg = SolverConfig(gamma=c.gamma, tol=1e-8)
        out = warm_start(A, y, cfg, c.x_star, norm=norm)
        assert out.converged and out.iterations <= 2
        assert np.max(np.abs(out.x_star - c.x_star)) <= 1e-8


def test_warm_start_leaves_unstable_point():
    A, y, norm, cands = _candidates(7, 2.5)
    c = max((c for c in cands if not c.stable), key=lambda c: c.jacobian_radius)
    assert c.jacobian_radius > 1.05
    d = np.zeros(A.shape[1])
    d[c.support] = 1e-8 * np.sign(c.x_star[c.support])
    out = warm_start(A, y, SolverConfig(gamma=c.gamma, max_iter=500, trace=True),
                     c.x_star + d, norm=norm)
    x0 = c.x_star + d
    dist0 = np.max(np.abs(d))
    assert max(np.max(np.abs(r.x - x0)) for r in out.trace) >= 10 * dist0


def test_warm_start_from_zero_equals_adaptive():
    A, y = random_instance(8, 20, 30)
    cfg = SolverConfig(gamma=1.6)
    a = adaptive_ista(A, y, cfg)
    b = warm_start(A, y, cfg, np.zeros(30))
    assert a.status == b.status and a.iterations == b.iterations
    assert np.array_equal(a.x_star, b.x_star)


def test_input_validation():
    with pytest.raises(ValueError):
        adaptive_ista(np.eye(3), np.ones(4))
    with pytest.raises(ValueError):
        warm_start(np.eye(3), np.ones(3), SolverConfig(), np.ones(2))
