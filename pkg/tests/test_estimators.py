import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vastvol.estimators import (
    CovEstimate,
    Method,
    TwoScaleConfig,
    choose_two_scale,
    estimate_matrix_allrefresh,
    estimate_matrix_pairwise,
    load_cov_estimate,
    lowfreq_sample_cov,
    parzen_kernel,
    realized_kernel,
    save_cov_estimate,
    synchronous_cov,
    tscv,
    tscv_polarized,
    tsrv,
)
from vastvol.exceptions import InsufficientDataError
from vastvol.tickdata import TickPanel, TickSeries

from conftest import random_panel


def brute_two_scale(x, y, K, J=1):
    """Independent double-loop evaluation of the two-scale estimator."""
    m = len(x)
    n = m - 1
    sk = 0.0
    for i in range(K, m):
        sk += (x[i] - x[i - K]) * (y[i] - y[i - K])
    sk /= K
    sj = 0.0
    for i in range(J, m):
        sj += (x[i] - x[i - J]) * (y[i] - y[i - J])
    sj /= J
    return sk - ((n - K + 1) / K) / ((n - J + 1) / J) * sj


class TestChooseTwoScale:
    def test_n_1000(self):
        cfg = choose_two_scale(1000)
        assert cfg.K == 100
        assert cfg.J == 1
        nbar = (1000 - cfg.K + 1) / cfg.K
        assert nbar == pytest.approx(9.01)
        assert 0.5 * 10 <= nbar <= 2 * 10

    def test_n_8(self):
        cfg = choose_two_scale(8)
        assert cfg.K == 4
        nbar = (8 - cfg.K + 1) / cfg.K
        assert nbar == pytest.approx(1.25)

    def test_too_small(self):
        with pytest.raises(InsufficientDataError):
            choose_two_scale(7)

    @pytest.mark.parametrize("n", [8, 13, 50, 117, 468, 1000, 4681, 23401])
    def test_band_always_satisfied(self, n):
        cfg = choose_two_scale(n)
        nbar = (n - cfg.K + 1) / cfg.K
        assert 0.5 * n ** (1 / 3) <= nbar <= 2 * n ** (1 / 3)
        assert 1 <= cfg.J < cfg.K <= n - 1

    def test_config_invariant(self):
        with pytest.raises(ValueError):
            TwoScaleConfig(K=1, J=1)


class TestTsrv:
    def test_constant_series_zero(self):
        cfg = TwoScaleConfig(K=4)
        assert tsrv(np.full(20, 3.7), cfg) == 0.0

    def test_linear_series_matches_brute_force(self):
        delta = 1e-3
        x = np.arange(50) * delta
        cfg = choose_two_scale(len(x))
        assert tsrv(x, cfg) == pytest.approx(
            brute_two_scale(x, x, cfg.K), abs=1e-12
        )

    def test_random_inputs_match_brute_force(self):
        rng = np.random.default_rng(2)
        for _ in range(25):
            m = int(rng.integers(9, 300))
            x = rng.standard_normal(m).cumsum() * 0.02
            cfg = choose_two_scale(m)
            assert tsrv(x, cfg) == pytest.approx(
                brute_two_scale(x, x, cfg.K), rel=1e-12, abs=1e-15
            )

    def test_too_short_rejected(self):
        with pytest.raises(InsufficientDataError):
            tsrv(np.zeros(4), TwoScaleConfig(K=4))

    def test_pure_noise_nearly_unbiased(self):
        # the K/J subsample weighting must cancel E[noise^2] exactly
        rng = np.random.default_rng(3)
        m = 5000
        cfg = choose_two_scale(m)
        vals = [
            tsrv(rng.standard_normal(m) * 0.0005, cfg) for _ in range(200)
        ]
        se = np.std(vals) / np.sqrt(len(vals))
        assert abs(np.mean(vals)) < 4 * se


class TestTscv:
    def test_diagonal_equals_tsrv_exactly(self):
        rng = np.random.default_rng(4)
        x = rng.standard_normal(100).cumsum()
        cfg = choose_two_scale(100)
        assert tscv(x, x, cfg) == tsrv(x, cfg)

    def test_negation_flips_sign_exactly(self):
        rng = np.random.default_rng(5)
        x = rng.standard_normal(80).cumsum()
        cfg = choose_two_scale(80)
        assert tscv(x, -x, cfg) == -tsrv(x, cfg)

    def test_length_mismatch(self):
        with pytest.raises(ValueError, match="mismatch"):
            tscv(np.zeros(10), np.zeros(11), TwoScaleConfig(K=3))

    def test_matches_brute_force(self):
        rng = np.random.default_rng(6)
        for _ in range(25):
            m = int(rng.integers(9, 300))
            x = rng.standard_normal(m).cumsum() * 0.02
            y = rng.standard_normal(m).cumsum() * 0.02
            cfg = choose_two_scale(m)
            assert tscv(x, y, cfg) == pytest.approx(
                brute_two_scale(x, y, cfg.K), rel=1e-12, abs=1e-15
            )

    @settings(max_examples=30, deadline=None)
    @given(
        st.integers(min_value=9, max_value=120),
        st.floats(min_value=-4, max_value=4, allow_nan=False).filter(lambda a: a != 0),
        st.floats(min_value=-4, max_value=4, allow_nan=False).filter(lambda b: b != 0),
        st.integers(min_value=0, max_value=2**31 - 1),
    )
    def test_bilinearity_and_symmetry(self, m, a, b, seed):
        rng = np.random.default_rng(seed)
        x = rng.standard_normal(m).cumsum()
        y = rng.standard_normal(m).cumsum()
        cfg = choose_two_scale(m)
        base = tscv(x, y, cfg)
        assert tscv(a * x, b * y, cfg) == pytest.approx(
            a * b * base, rel=1e-9, abs=1e-12
        )
        assert tscv(y, x, cfg) == tscv(x, y, cfg)


class TestTscvPolarized:
    def test_diagonal_identity_exact(self):
        rng = np.random.default_rng(7)
        x = rng.standard_normal(60).cumsum()
        cfg = choose_two_scale(60)
        # (tsrv(2x) - tsrv(0)) / 4 = tsrv(x) holds exactly in floats
        assert tscv_polarized(x, x, cfg) == tsrv(x, cfg)

    def test_constant_second_series_gives_zero(self):
        rng = np.random.default_rng(8)
        x = rng.standard_normal(60).cumsum()
        c = np.full(60, 0.25)
        cfg = choose_two_scale(60)
        assert tscv_polarized(x, c, cfg) == 0.0

    def test_close_to_direct_tscv(self):
        # both are consistent for the covariation; on identical synchronous
        # inputs the polarized form differs only through cross terms
        rng = np.random.default_rng(9)
        diffs = []
        for _ in range(50):
            z = rng.standard_normal((2, 500))
            x = (z[0]).cumsum() * 0.02
            y = (0.5 * z[0] + np.sqrt(1 - 0.25) * z[1]).cumsum() * 0.02
            cfg = choose_two_scale(500)
            diffs.append(tscv_polarized(x, y, cfg) - tscv(x, y, cfg))
        assert np.median(np.abs(diffs)) < 1e-3


class TestRealizedKernel:
    def test_constant_prices_zero(self):
        assert realized_kernel(np.full(30, 1.0), H=1) == 0.0

    def test_parzen_values(self):
        assert parzen_kernel(0.0) == 1.0
        assert parzen_kernel(0.5) == pytest.approx(0.25)
        assert parzen_kernel(1.0) == 0.0
        assert parzen_kernel(2.0) == 0.0
        with pytest.raises(ValueError):
            parzen_kernel(-0.1)

    def test_h1_equals_gamma0_plus_two_gamma1(self):
        rng = np.random.default_rng(10)
        x = rng.standard_normal(200).cumsum() * 0.01
        r = np.diff(x)
        gamma0 = float(np.sum(r * r))
        gamma1 = float(np.sum(r[1:] * r[:-1]))
        assert realized_kernel(x, H=1) == pytest.approx(
            gamma0 + 2 * gamma1, rel=1e-12
        )

    def test_brute_force_general_h(self):
        rng = np.random.default_rng(11)
        x = rng.standard_normal(300).cumsum() * 0.01
        r = np.diff(x)
        H = 5

        def k(u):
            if u <= 0.5:
                return 1 - 6 * u**2 + 6 * u**3
            return 2 * (1 - u) ** 3 if u <= 1 else 0.0

        expected = float(np.sum(r * r))
        for h in range(1, H + 1):
            g = float(np.sum(r[h:] * r[:-h]))
            expected += k((h - 1) / H) * 2 * g
        assert realized_kernel(x, H=H) == pytest.approx(expected, rel=1e-12)

    def test_white_noise_mean_zero(self):
        rng = np.random.default_rng(12)
        vals = [
            realized_kernel(rng.standard_normal(500) * 0.001, H=1)
            for _ in range(200)
        ]
        se = np.std(vals) / np.sqrt(len(vals))
        assert abs(np.median(vals)) < 3 * se * 1.3  # median se ~ 1.25 * mean se

    def test_too_short(self):
        with pytest.raises(InsufficientDataError):
            realized_kernel(np.zeros(2), H=1)


class TestLowFreqSampleCov:
    def test_identical_returns_zero_matrix(self):
        closes = np.cumsum(np.full((10, 2), 0.01), axis=0)
        est = lowfreq_sample_cov(closes)
        np.testing.assert_allclose(est.matrix, 0.0, atol=1e-18)

    def test_two_days_rejected(self):
        with pytest.raises(InsufficientDataError):
            lowfreq_sample_cov(np.zeros((2, 1)))

    def test_hand_computed_covariance(self):
        # returns (1,1), (-1,-1), (1,1), (-1,-1): mean 0, cov = 4/3 * ones
        returns = np.array([[1.0, 1.0], [-1.0, -1.0], [1.0, 1.0], [-1.0, -1.0]])
        closes = np.vstack([np.zeros(2), np.cumsum(returns, axis=0)])
        est = lowfreq_sample_cov(closes)
        np.testing.assert_allclose(est.matrix, 4.0 / 3.0 * np.ones((2, 2)))
        assert est.window_days == 1.0
        assert est.method == Method.LOWFREQ_SAMPLE

    def test_mean_subtracted(self):
        rng = np.random.default_rng(13)
        r = rng.standard_normal((50, 3)) + 5.0
        closes = np.vstack([np.zeros(3), np.cumsum(r, axis=0)])
        est = lowfreq_sample_cov(closes)
        np.testing.assert_allclose(est.matrix, np.cov(r.T, ddof=1), rtol=1e-10)


class TestMatrixAssembly:
    def test_single_asset_pairwise_is_tsrv(self):
        rng = np.random.default_rng(14)
        times = np.sort(rng.uniform(0, 100, 50))
        prices = rng.standard_normal(50).cumsum() * 0.01
        panel = TickPanel(100.0, (TickSeries("A", times, prices),))
        est = estimate_matrix_pairwise(panel, 1.0)
        assert est.matrix.shape == (1, 1)
        assert est.matrix[0, 0] == tsrv(prices, choose_two_scale(50))

    def test_synchronous_panel_pairwise_equals_allrefresh(self):
        rng = np.random.default_rng(15)
        times = np.sort(rng.uniform(0, 100, 60))
        series = tuple(
            TickSeries(f"S{k}", times, rng.standard_normal(60).cumsum() * 0.01)
            for k in range(3)
        )
        panel = TickPanel(100.0, series)
        a = estimate_matrix_pairwise(panel, 1.0)
        b = estimate_matrix_allrefresh(panel, 1.0, method="TSCV")
        np.testing.assert_allclose(a.matrix, b.matrix, atol=1e-12)

    def test_exact_symmetry(self):
        rng = np.random.default_rng(16)
        panel = random_panel(rng, 4, min_ticks=20, max_ticks=60)
        for est in (
            estimate_matrix_pairwise(panel, 1.0),
            estimate_matrix_allrefresh(panel, 1.0, method="TSCV"),
            estimate_matrix_allrefresh(panel, 1.0, method="RK"),
        ):
            np.testing.assert_array_equal(est.matrix, est.matrix.T)

    def test_worker_count_does_not_change_output(self):
        rng = np.random.default_rng(17)
        panel = random_panel(rng, 5, min_ticks=20, max_ticks=60)
        a = estimate_matrix_pairwise(panel, 1.0, workers=1)
        b = estimate_matrix_pairwise(panel, 1.0, workers=4)
        np.testing.assert_array_equal(a.matrix, b.matrix)

    def test_insufficient_pair_flagged_not_fatal(self):
        # assets overlap only once: the pair grid is too short
        a = TickSeries("A", np.arange(1.0, 21.0), np.zeros(20))
        b = TickSeries("B", np.array([30.0]), np.zeros(1))
        panel = TickPanel(40.0, (a, b))
        est = estimate_matrix_pairwise(panel, 1.0)
        assert est.matrix[0, 1] == 0.0
        pairs = [(r[0], r[1]) for r in est.rejections]
        assert ("A", "B") in pairs
        assert ("B", "B") in pairs  # single tick cannot support a tsrv either
        assert est.n_min == 1

    def test_allrefresh_requires_enough_common_points(self):
        a = TickSeries("A", np.arange(1.0, 21.0), np.zeros(20))
        b = TickSeries("B", np.array([30.0]), np.zeros(1))
        panel = TickPanel(40.0, (a, b))
        with pytest.raises(InsufficientDataError):
            estimate_matrix_allrefresh(panel, 1.0, method="TSCV")

    def test_pair_counts_and_nmin(self):
        rng = np.random.default_rng(18)
        panel = random_panel(rng, 3, min_ticks=20, max_ticks=40)
        est = estimate_matrix_pairwise(panel, 1.0)
        assert est.pair_counts[0, 0] == len(panel.series[0])
        off = est.pair_counts[~np.eye(3, dtype=bool)]
        assert est.n_min == off.min()

    def test_rk_mode_diagonal_is_realized_kernel(self):
        rng = np.random.default_rng(19)
        times = np.sort(rng.uniform(0, 100, 80))
        prices = rng.standard_normal(80).cumsum() * 0.01
        panel = TickPanel(
            100.0,
            (
                TickSeries("A", times, prices),
                TickSeries("B", times, rng.standard_normal(80).cumsum() * 0.01),
            ),
        )
        est = estimate_matrix_allrefresh(panel, 1.0, method="RK", kernel_h=1)
        assert est.matrix[0, 0] == pytest.approx(realized_kernel(prices, 1), rel=1e-12)


class TestSynchronousCov:
    def test_rv_reads_quadratic_covariation(self):
        rng = np.random.default_rng(20)
        x = rng.standard_normal((2, 2000)).cumsum(axis=1) * 0.01
        est = synchronous_cov(x, window_days=1.0)
        r = np.diff(x, axis=1)
        np.testing.assert_allclose(est.matrix, r @ r.T, rtol=1e-12)

    def test_tscv_variant_matches_direct_estimators(self):
        rng = np.random.default_rng(21)
        x = rng.standard_normal((2, 500)).cumsum(axis=1) * 0.01
        est = synchronous_cov(x, window_days=1.0, estimator="tscv")
        cfg = choose_two_scale(500)
        assert est.matrix[0, 0] == pytest.approx(tsrv(x[0], cfg), rel=1e-12)
        assert est.matrix[0, 1] == pytest.approx(tscv(x[0], x[1], cfg), rel=1e-12)


class TestSerialization:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(22)
        panel = random_panel(rng, 3, min_ticks=20, max_ticks=40)
        est = estimate_matrix_pairwise(panel, 10.0)
        prefix = tmp_path / "cov"
        save_cov_estimate(est, prefix)
        back = load_cov_estimate(prefix)
        np.testing.assert_array_equal(back.matrix, est.matrix)
        np.testing.assert_array_equal(back.pair_counts, est.pair_counts)
        assert back.asset_ids == est.asset_ids
        assert back.method == est.method
        assert back.n_min == est.n_min
        assert back.window_days == est.window_days
        assert back.rejections == est.rejections

    def test_validation_catches_asymmetry(self):
        est = CovEstimate(
            asset_ids=("A", "B"),
            matrix=np.array([[1.0, 0.5], [0.4, 1.0]]),
            method=Method.PAIRWISE_TSCV,
            pair_counts=np.full((2, 2), 10, dtype=np.int64),
            n_min=10,
            window_days=1.0,
        )
        with pytest.raises(ValueError, match="symmetric"):
            est.validate()
