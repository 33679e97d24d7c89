import math

import numpy as np
import pytest

from madlasso.linalg import operator_norm
from madlasso.path import (DegeneratePath, OutOfRange, Verdict, ZeroMedian,
                           candidates_for_gamma, find_segment, gamma_of_lambda, lasso_path,
                           path_solution, segment_median_coeffs)
from madlasso.thresholding import check_fixed_point, mad_threshold, median_abs

from oracles import cd_lasso, random_instance, upper_median


def test_identity_two_coordinates():
    segs = lasso_path(np.eye(2), np.array([3.0, 1.0]))
    assert segs[0].lambda_hi == math.inf and segs[0].lambda_lo == pytest.approx(3.0)
    assert segs[1].lambda_hi == pytest.approx(3.0) and segs[1].lambda_lo == pytest.approx(1.0)
    assert segs[1].equicorrelation.tolist() == [0]
    for lam in (1.2, 2.0, 2.9):
        assert path_solution(segs, lam) == pytest.approx([3.0 - lam, 0.0])


def test_identity_full_path_reaches_floor():
    segs = lasso_path(np.eye(2), np.array([3.0, 1.0]), full=True)
    assert segs[-1].lambda_lo == pytest.approx(3e-8)
    assert path_solution(segs, 0.5) == pytest.approx([2.5, 0.5])


def test_null_segment():
    A, y = random_instance(0, 10, 24)
    segs = lasso_path(A, y)
    lam_max = np.max(np.abs(A.T @ y))
    assert segs[0].lambda_lo == pytest.approx(lam_max, rel=1e-14)
    assert segs[0].equicorrelation.size == 0
    assert not np.any(path_solution(segs, 1.5 * lam_max))
    assert not np.any(path_solution(segs, lam_max))


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_path_matches_coordinate_descent(seed):
    A, y = random_instance(seed, 10, 24)
    segs = lasso_path(A, y)
    lo, hi = segs[-1].lambda_lo, segs[0].lambda_lo
    rng = np.random.default_rng(seed)
    for lam in rng.uniform(lo, 1.2 * hi, 50):
        x = path_solution(segs, lam)
        ref = cd_lasso(A, y, lam)
        assert np.max(np.abs(x - ref)) <= 1e-7


def test_segments_tile_the_range():
    A, y = random_instance(3, 12, 30)
    segs = lasso_path(A, y)
    for up, down in zip(segs, segs[1:]):
        assert up.lambda_lo == down.lambda_hi
        assert down.lambda_lo < down.lambda_hi
    assert [s.segment_id for s in segs] == list(range(len(segs)))
    assert max(s.equicorrelation.size for s in segs) < math.ceil(30 / 2)


def test_equicorrelation_and_sign_consistency():
    A, y = random_instance(4, 12, 30)
    for seg in lasso_path(A, y)[1:]:
        for lam in seg.interior(5):
            c = -A.T @ (A @ seg.solution(lam) - y)
            I = seg.equicorrelation
            assert np.allclose(c[I], lam * seg.signs, atol=1e-10)
            off = np.setdiff1d(np.arange(30), I)
            assert np.all(np.abs(c[off]) <= lam + 1e-10)
            x = seg.solution(lam)
            assert np.all(np.sign(x[I]) == seg.signs)
            assert np.allclose(seg.correlation(lam), c, atol=1e-10)


def test_solution_continuous_at_knots():
    A, y = random_instance(5, 12, 30)
    segs = lasso_path(A, y)
    for up, down in zip(segs[1:], segs[2:]):
        k = down.lambda_hi
        assert np.max(np.abs(up.solution(k) - down.solution(k))) <= 1e-9
        assert abs(abs(up.signed_median(k)) - abs(down.signed_median(k))) <= 1e-9


def test_median_coefficients_match_direct_median():
    for seed in range(4):
        A, y = random_instance(seed, 10, 24)
        for seg in lasso_path(A, y):
            for lam in seg.interior(10):
                c = -A.T @ (A @ seg.solution(lam) - y)
                assert abs(abs(seg.signed_median(lam)) - upper_median(np.abs(c))) <= 1e-10
                assert median_abs(c).index == seg.median_index


def test_segment_median_coeffs_empty_support():
    A, y = random_instance(6, 8, 12)
    a, b = segment_median_coeffs(A, y, [], [], 3)
    assert a == 0.0 and b == pytest.approx(A[:, 3] @ y)


def test_segment_median_coeffs_orthogonal_column():
    A = np.zeros((3, 3))
    A[0, 0] = 1.0
    A[2, 2] = 1.0
    A[1, 1] = 1.0
    y = np.array([2.0, 0.0, 0.0])
    a, b = segment_median_coeffs(A, y, [0], [1.0], 1)
    assert a == 0.0 and b == 0.0


def test_gamma_on_constant_median_segment():
    # identity design: on (4, 5) the median correlation is the constant 1
    y = np.array([5.0, 4.0, 1.0, 0.5, 0.2])
    segs = lasso_path(np.eye(5), y)
    seg = find_segment(segs, 4.5)
    assert (seg.a, seg.b) == (0.0, pytest.approx(1.0))
    assert gamma_of_lambda(segs, 4.5) == pytest.approx(4.5)


def test_gamma_continuous_at_knots():
    A, y = random_instance(7, 12, 30)
    segs = lasso_path(A, y)
    for up, down in zip(segs[:-1], segs[1:]):
        k = down.lambda_hi
        gu, gd = k / abs(up.signed_median(k)), k / abs(down.signed_median(k))
        assert gu == pytest.approx(gd, rel=1e-8)


def test_gamma_matches_coordinate_descent_oracle():
    A, y = random_instance(8, 10, 24)
    segs = lasso_path(A, y)
    rng = np.random.default_rng(8)
    for lam in rng.uniform(segs[-1].lambda_lo, segs[0].lambda_lo, 30):
        x = cd_lasso(A, y, lam)
        ref = lam / upper_median(np.abs(A.T @ (y - A @ x)))
        assert gamma_of_lambda(segs, lam) == pytest.approx(ref, rel=1e-6)


def test_out_of_range_and_zero_median():
    A, y = random_instance(9, 10, 24)
    segs = lasso_path(A, y, lambda_min=0.5 * np.max(np.abs(A.T @ y)))
    with pytest.raises(OutOfRange):
        gamma_of_lambda(segs, 0.1 * segs[-1].lambda_lo)
    segs = lasso_path(np.eye(4), np.array([3.0, 0.0, 0.0, 0.0]))
    with pytest.raises(ZeroMedian):
        gamma_of_lambda(segs, 5.0)


def test_lambda_min_above_lambda_max_gives_null_segment_only():
    A, y = random_instance(10, 10, 24)
    segs = lasso_path(A, y, lambda_min=10 * np.max(np.abs(A.T @ y)))
    assert len(segs) == 1 and segs[0].equicorrelation.size == 0


def test_degenerate_simultaneous_knots():
    with pytest.raises(DegeneratePath) as err:
        lasso_path(np.eye(3), np.array([3.0, 2.0, 2.0]))
    assert err.value.knot == pytest.approx(2.0)
    with pytest.raises(DegeneratePath):
        lasso_path(np.eye(2), np.array([1.0, -1.0]))


def test_zero_observation():
    segs = lasso_path(np.eye(3), np.zeros(3))
    assert len(segs) == 1 and segs[0].degenerate


def test_candidates_identity_design():
    y = np.array([3.0, -0.2, 1.5, 0.4, -2.5, 0.1, 0.05])
    cands = candidates_for_gamma(np.eye(7), y, lasso_path(np.eye(7), y), 1.5, mu=1.0)
    assert len(cands) == 1
    c = cands[0]
    assert c.x_star == pytest.approx(mad_threshold(y, 1.5).output, abs=1e-12)
    assert c.verdict is Verdict.STABLE


@pytest.mark.parametrize("gamma,lam", [(4.5, 4.5), (3.0, 3.0)])
def test_candidates_constant_median(gamma, lam):
    y = np.array([5.0, 4.0, 1.0, 0.5, 0.2])
    cands = candidates_for_gamma(np.eye(5), y, lasso_path(np.eye(5), y), gamma, mu=1.0)
    assert [c.lambda_star for c in cands] == [pytest.approx(lam)]


def test_non_monotone_instance_has_several_candidates():
    A, y = random_instance(1, 20, 30, rho=0.2)
    gamma = 1.2 * 1.4826
    cands = candidates_for_gamma(A, y, lasso_path(A, y), gamma,
                                 mu=1.0 / operator_norm(A) ** 2)
    assert len(cands) >= 2
    for c in cands:
        assert check_fixed_point(A, y, c.x_star, gamma, 1e-9).passes
        assert c.lambda_star == pytest.approx(gamma * median_abs(
            A.T @ (y - A @ c.x_star)).value, rel=1e-9)
    assert len({round(c.lambda_star, 9) for c in cands}) == len(cands)


@pytest.mark.parametrize("seed,gamma", [(1, 1.7791), (2, 1.5), (3, 2.5), (4, 1.3)])
def test_candidates_complete_against_dense_grid(seed, gamma):
    A, y = random_instance(seed, 12, 28, rho=0.2)
    segs = lasso_path(A, y)
    cands = candidates_for_gamma(A, y, segs, gamma, classify=False)
    grid = np.linspace(segs[-1].lambda_lo, 2 * segs[0].lambda_lo, 10_000)[1:-1]
    g = np.empty(grid.size)
    for k, lam in enumerate(grid):
        c = A.T @ (y - A @ path_solution(segs, lam))
        g[k] = lam / upper_median(np.abs(c)) - gamma
    crossings = np.flatnonzero(np.sign(g[:-1]) != np.sign(g[1:]))
    step = grid[1] - grid[0]
    found = np.array([c.lambda_star for c in cands])
    for k in crossings:
        assert np.min(np.abs(found - grid[k])) <= 2 * step
    assert len(found) == len(crossings)


def test_candidates_reject_gamma_at_most_one():
    with pytest.raises(ValueError):
        candidates_for_gamma(np.eye(2), np.ones(2), lasso_path(np.eye(2), np.ones(2) * [1, 2]), 1.0)
