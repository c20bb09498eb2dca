import numpy as np
import pytest

from vastvol.estimators import CovEstimate, Method
from vastvol.exceptions import (
    IndefiniteMatrixError,
    InfeasibleError,
    SolverError,
)
from vastvol.portfolio import (
    PortfolioWeights,
    max_elementwise_error,
    portfolio_risk,
    risk_gap_report,
    save_weights,
    solve_min_variance,
)


def make_estimate(matrix, window_days=1.0):
    matrix = np.asarray(matrix, dtype=float)
    p = matrix.shape[0]
    return CovEstimate(
        asset_ids=tuple(f"A{i}" for i in range(p)),
        matrix=matrix,
        method=Method.LATENT_ORACLE,
        pair_counts=np.full((p, p), 100, dtype=np.int64),
        n_min=100,
        window_days=window_days,
    )


def random_psd(rng, p, ridge=0.1):
    a = rng.standard_normal((p, p))
    return a @ a.T + ridge * np.eye(p)


def grid_search_objective(sigma, c, step=1e-3):
    """Brute-force oracle for p = 3: full grid over (w1, w2)."""
    lo, hi = -(c - 1) / 2, (c + 1) / 2
    vals = np.arange(round(lo / step), round(hi / step) + 1) * step
    w1, w2 = np.meshgrid(vals, vals, indexing="ij")
    w3 = 1.0 - w1 - w2
    feasible = (np.abs(w1) + np.abs(w2) + np.abs(w3)) <= c + 1e-12
    w = np.stack([w1, w2, w3], axis=-1)
    obj = np.einsum("...i,ij,...j->...", w, sigma, w)
    return float(np.min(obj[feasible]))


class TestSolveMinVariance:
    def test_identity_equal_weights(self):
        w = solve_min_variance(np.eye(4), c=1.0)
        np.testing.assert_allclose(w.w, 0.25, atol=1e-8)
        assert w.w @ np.eye(4) @ w.w == pytest.approx(0.25, abs=1e-8)

    def test_matches_closed_form_when_unconstrained(self):
        sigma = np.diag([1.0, 4.0])
        w = solve_min_variance(sigma, c=3.0)
        np.testing.assert_allclose(w.w, [0.8, 0.2], atol=1e-6)

    def test_closed_form_random_instances(self):
        rng = np.random.default_rng(1)
        for _ in range(10):
            sigma = random_psd(rng, 5, ridge=0.5)
            inv1 = np.linalg.solve(sigma, np.ones(5))
            w_exact = inv1 / inv1.sum()
            c = np.abs(w_exact).sum() + 0.5  # safely non-binding
            w = solve_min_variance(sigma, c)
            np.testing.assert_allclose(w.w, w_exact, atol=1e-6)

    def test_matches_grid_oracle_p3(self):
        rng = np.random.default_rng(2)
        for _ in range(5):
            sigma = random_psd(rng, 3)
            w = solve_min_variance(sigma, c=1.5)
            obj = float(w.w @ sigma @ w.w)
            grid_obj = grid_search_objective(sigma, c=1.5)
            assert obj <= grid_obj + 1e-9
            assert grid_obj - obj <= 1e-5

    def test_c_below_one_infeasible(self):
        with pytest.raises(InfeasibleError):
            solve_min_variance(np.eye(3), c=0.9)

    def test_indefinite_rejected_with_advice(self):
        sigma = np.array([[1.0, 1.5], [1.5, 1.0]])  # eigenvalue -0.5
        with pytest.raises(IndefiniteMatrixError, match="project"):
            solve_min_variance(sigma, c=2.0)

    def test_objective_monotone_in_c(self):
        rng = np.random.default_rng(3)
        for _ in range(5):
            sigma = random_psd(rng, 6)
            objs = [
                solve_min_variance(sigma, c).w @ sigma @ solve_min_variance(sigma, c).w
                for c in (1.0, 1.2, 1.6, 2.0, 3.0)
            ]
            assert np.all(np.diff(objs) <= 1e-9)

    def test_scale_equivariance(self):
        rng = np.random.default_rng(4)
        sigma = random_psd(rng, 5)
        base = solve_min_variance(sigma, c=1.5).w
        for alpha in (0.5, 2.0, 7.3, 1e-4):
            w = solve_min_variance(alpha * sigma, c=1.5).w
            np.testing.assert_allclose(w, base, atol=1e-7)

    def test_short_side_identity(self):
        rng = np.random.default_rng(5)
        for c in (1.0, 1.3, 2.0):
            for _ in range(5):
                sigma = random_psd(rng, 5)
                w = solve_min_variance(sigma, c).w
                w_minus = -w[w < 0].sum()
                assert w_minus <= (c - 1) / 2 + 1e-8

    def test_accepts_cov_estimate(self):
        est = make_estimate(np.eye(3))
        w = solve_min_variance(est, c=1.0)
        np.testing.assert_allclose(w.w, 1 / 3, atol=1e-8)

    def test_singular_matrix_deterministic(self):
        sigma = np.outer(np.ones(3), np.ones(3))  # rank 1
        w1 = solve_min_variance(sigma, c=1.5).w
        w2 = solve_min_variance(sigma, c=1.5).w
        np.testing.assert_array_equal(w1, w2)


class TestPortfolioWeights:
    def test_accounting_fields(self):
        w = PortfolioWeights.from_vector(np.array([0.6, 0.5, -0.1, 0.0005, -0.0005]))
        assert w.gross_exposure == pytest.approx(1.201)
        assert w.n_long == 2
        assert w.n_short == 1
        assert w.max_weight == 0.6
        assert w.min_weight == -0.1

    def test_sum_constraint_enforced(self):
        with pytest.raises(ValueError):
            PortfolioWeights.from_vector(np.array([0.5, 0.4]))


class TestPortfolioRisk:
    def test_equal_weight_identity(self):
        w = PortfolioWeights.from_vector(np.full(4, 0.25))
        assert portfolio_risk(w, make_estimate(np.eye(4))) == pytest.approx(0.5)

    def test_annualization(self):
        sigma = make_estimate(np.diag([0.0004, 0.01]), window_days=1.0)
        w = PortfolioWeights.from_vector(np.array([1.0, 0.0]))
        risk = portfolio_risk(w, sigma, annualize=True)
        assert risk == pytest.approx(np.sqrt(0.0004 * 252))
        assert risk == pytest.approx(0.3175, abs=2e-4)

    def test_window_scaling(self):
        sigma = make_estimate(np.diag([0.004, 0.01]), window_days=10.0)
        w = PortfolioWeights.from_vector(np.array([1.0, 0.0]))
        assert portfolio_risk(w, sigma, annualize=True) == pytest.approx(
            np.sqrt(0.004 * 25.2)
        )

    def test_indefinite_flagged(self):
        # weight along the negative eigenvector direction of an indefinite matrix
        sigma = np.array([[1.0, 1.5], [1.5, 1.0]])
        with pytest.raises(IndefiniteMatrixError):
            portfolio_risk(np.array([2.0, -1.0]), sigma)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            portfolio_risk(np.ones(3) / 3, make_estimate(np.eye(2)))


class TestMaxElementwiseError:
    def test_identical(self):
        a = np.eye(3)
        assert max_elementwise_error(a, a) == 0.0

    def test_single_entry(self):
        a = np.eye(3)
        b = a.copy()
        b[1, 2] += 0.01
        assert max_elementwise_error(b, a) == pytest.approx(0.01)

    def test_matches_two_loop_oracle(self):
        rng = np.random.default_rng(6)
        a, b = rng.standard_normal((2, 4, 4))
        expected = max(
            abs(a[i, j] - b[i, j]) for i in range(4) for j in range(4)
        )
        assert max_elementwise_error(a, b) == pytest.approx(expected)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            max_elementwise_error(np.eye(2), np.eye(3))


class TestRiskGapReport:
    def test_identical_matrices_zero_gaps(self):
        sigma = make_estimate(random_psd(np.random.default_rng(7), 4))
        report = risk_gap_report(sigma, sigma, c=1.5)
        assert report.a_p == 0.0
        assert report.gap_actual_oracle <= 1e-9
        assert report.gap_actual_perceived <= 1e-9
        assert report.gap_oracle_perceived <= 1e-9
        assert report.bound_2apc2 == 0.0
        assert report.perceived_risk == pytest.approx(report.oracle_risk, abs=1e-6)

    def test_perturbed_oracle_respects_bounds(self):
        rng = np.random.default_rng(8)
        oracle = random_psd(rng, 4, ridge=1.0)
        delta = 0.01
        est = oracle.copy()
        est[0, 1] += delta
        est[1, 0] += delta
        c = 1.5
        report = risk_gap_report(make_estimate(est), make_estimate(oracle), c)
        assert report.a_p == pytest.approx(delta)
        assert report.gap_actual_oracle <= 2 * delta * c * c + 1e-8
        assert report.gap_actual_perceived <= delta * c * c + 1e-8
        assert report.gap_oracle_perceived <= delta * c * c + 1e-8
        assert report.bound_2apc2 == pytest.approx(2 * delta * c * c)

    def test_bound_invariant_random_feasible_weights(self):
        rng = np.random.default_rng(9)
        for _ in range(20):
            oracle = random_psd(rng, 5)
            noise = rng.standard_normal((5, 5)) * 0.05
            est = oracle + (noise + noise.T) / 2
            a_p = max_elementwise_error(est, oracle)
            c = 2.0
            # random feasible w: sum 1, ||w||_1 <= c
            w = rng.standard_normal(5)
            w = w / np.abs(w).sum() * (c - 1)  # gross c-1, sum arbitrary
            w = w + (1 - w.sum()) / 5
            if np.abs(w).sum() > c:
                continue
            gap = abs(w @ est @ w - w @ oracle @ w)
            assert gap <= a_p * c * c + 1e-8

    def test_window_days_must_match(self):
        a = make_estimate(np.eye(2), window_days=1.0)
        b = make_estimate(np.eye(2), window_days=10.0)
        with pytest.raises(ValueError, match="window"):
            risk_gap_report(a, b, c=1.5)


def test_save_weights_format(tmp_path):
    w = PortfolioWeights.from_vector(np.array([0.75, 0.25]))
    path = tmp_path / "w.csv"
    save_weights(w, ("AA", "BB"), path)
    lines = path.read_text().splitlines()
    assert lines[0] == "asset_id,weight"
    assert lines[1].startswith("AA,0.75")
