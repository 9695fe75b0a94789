import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from infoval.estimators import (
    ScalingConstants,
    omega_hat,
    lambda_hat,
    sigma_y2_hat,
    omega_product,
    log_decomposition,
    winsorize,
    deflate,
    corr_dp_dy,
    estimate_stock_day,
    estimates_to_frame,
)
from infoval.microdata import BarSeries, bars_from_session
from infoval.simulation import SimParams, simulate_batch, simulate_kyle


def make_bars(dp, dy, p_open=10.0, p_prev_close=10.0, h=60.0):
    dp = np.asarray(dp, dtype=float)
    dy = np.asarray(dy, dtype=float)
    last = p_open + np.cumsum(dp)
    return BarSeries("T", "2024-01-02", h, dp, dy, last, p_open, p_prev_close)


class TestOmegaHat:
    def test_single_bar_arithmetic(self):
        bars = make_bars([1.0], [2.0])
        assert omega_hat(bars, 1.0 / 252.0) == pytest.approx(504.0)

    def test_zero_flow_gives_zero(self):
        bars = make_bars([0.5, -0.2], [0.0, 0.0])
        assert omega_hat(bars, 1.0 / 252.0) == 0.0

    def test_empty_bars_rejected(self):
        bars = make_bars([], [])
        with pytest.raises(ValueError):
            omega_hat(bars, 1.0 / 252.0)

    @settings(max_examples=50)
    @given(st.data())
    def test_additive_over_partitions(self, data):
        n = data.draw(st.integers(2, 40))
        dp = np.asarray(data.draw(st.lists(st.floats(-1, 1), min_size=n, max_size=n)))
        dy = np.asarray(data.draw(st.lists(st.floats(-9, 9), min_size=n, max_size=n)))
        cut = data.draw(st.integers(1, n - 1))
        t = 1.0 / 252.0
        whole = omega_hat(make_bars(dp, dy), t)
        left = omega_hat(make_bars(dp[:cut], dy[:cut]), t)
        right = omega_hat(make_bars(dp[cut:], dy[cut:]), t)
        assert whole == pytest.approx(left + right, rel=1e-12, abs=1e-9)

    def test_scale_equivariance(self):
        dp = np.array([0.1, -0.2, 0.3])
        dy = np.array([5.0, 2.0, -4.0])
        t = 1.0 / 252.0
        base = omega_hat(make_bars(dp, dy), t)
        assert omega_hat(make_bars(3 * dp, dy), t) == pytest.approx(3 * base)
        assert omega_hat(make_bars(dp, 7 * dy), t) == pytest.approx(7 * base)


class TestLambdaHat:
    def test_perfect_fit(self):
        dy = np.array([100.0, -50.0, 20.0, -10.0])
        p_open = 10.0
        levels = p_open * np.exp(np.cumsum(0.01 * dy))
        dp = np.diff(np.concatenate(([p_open], levels)))
        bars = make_bars(dp, dy, p_open=p_open)
        assert lambda_hat(bars) == pytest.approx(0.01, rel=1e-10)

    def test_orthogonal_sample_gives_zero(self):
        bars = make_bars([0.1, 0.1, -0.1, -0.1], [1.0, -1.0, 1.0, -1.0], p_open=100.0)
        # log returns are symmetric over +-dy: slope numerator cancels
        assert lambda_hat(bars, mode="levels") == pytest.approx(0.0, abs=1e-15)

    def test_all_zero_flow_rejected(self):
        bars = make_bars([0.1, 0.2], [0.0, 0.0])
        with pytest.raises(ValueError):
            lambda_hat(bars)

    def test_levels_mode_recovers_impact_exactly_without_public_noise(self):
        s = simulate_kyle(SimParams(sigma_v=2.0, sigma_z=1.0, n_steps=100, seed=5))
        bars = bars_from_session(s)
        assert lambda_hat(bars, mode="levels") == pytest.approx(2.0, rel=1e-12)

    def test_levels_mode_recovers_impact_across_paths(self):
        p = SimParams(sigma_v=1.0, sigma_z=1.0, sigma_w=1.0, n_steps=390,
                      n_paths=800, seed=17)
        batch = simulate_batch(p)
        lams = np.array([lambda_hat(bars_from_session(batch.session(i)), mode="levels")
                         for i in range(len(batch))])
        se = lams.std(ddof=1) / np.sqrt(lams.size)
        assert abs(lams.mean() - 1.0) < 2 * se

    def test_intercept_variant(self):
        rng = np.random.default_rng(3)
        dy = rng.normal(0, 10, 60)
        dp = 0.02 * dy + 0.5  # constant shift
        bars = make_bars(dp, dy, p_open=100.0)
        assert lambda_hat(bars, mode="levels", intercept=True) == pytest.approx(0.02, rel=1e-9)


class TestSigmaY2:
    def test_constant_flow_is_zero(self):
        bars = make_bars([0.0] * 5, [7.0] * 5)
        assert sigma_y2_hat(bars, 1.0) == 0.0

    def test_alternating_flow_small_n(self):
        # two bars (+q, -q): sample variance 2 q^2, times n/T
        q, t = 3.0, 0.5
        bars = make_bars([0.0, 0.0], [q, -q])
        assert sigma_y2_hat(bars, t) == pytest.approx(2 * q * q * 2 / (1 * t))

    def test_alternating_flow_large_n_approximation(self):
        q, n, t = 2.0, 400, 1.0
        dy = np.tile([q, -q], n // 2)
        bars = make_bars(np.zeros(n), dy)
        assert sigma_y2_hat(bars, t) == pytest.approx(q * q * n / t, rel=0.01)

    def test_needs_two_bars(self):
        bars = make_bars([0.1], [1.0])
        with pytest.raises(ValueError):
            sigma_y2_hat(bars, 1.0)

    def test_pure_noise_flow_variance(self):
        p = SimParams(sigma_v=1.0, sigma_z=1.0, n_steps=390, n_paths=500, seed=8,
                      informed=False, lambda_override=1.0)
        batch = simulate_batch(p)
        vals = np.array([sigma_y2_hat(bars_from_session(batch.session(i)), 1.0)
                         for i in range(len(batch))])
        se = vals.std(ddof=1) / np.sqrt(vals.size)
        assert abs(vals.mean() - 1.0) < 3 * se

    def test_informed_flow_adds_exactly_the_leakage_term(self):
        # E sum dy^2 = sigma_z^2 T + E sum dx^2, and the latter equals the
        # mean leakage over lambda
        from infoval.simulation import summarize_paths
        p = SimParams(sigma_v=1.0, sigma_z=1.0, n_steps=390, n_paths=800, seed=8)
        stats = summarize_paths(p)
        batch = simulate_batch(p)
        vals = np.array([sigma_y2_hat(bars_from_session(batch.session(i)), 1.0)
                         for i in range(len(batch))])
        excess = vals - 1.0 - stats.leakage  # lambda = 1 here
        se = excess.std(ddof=1) / np.sqrt(excess.size)
        assert abs(excess.mean()) < 3 * se


class TestOmegaProduct:
    def test_unit_inputs(self):
        assert omega_product(1.0, 1.0) == 1.0

    def test_zero_impact(self):
        assert omega_product(0.0, 123.4) == 0.0

    def test_negative_impact_passes_through(self):
        assert omega_product(-0.5, 2.0) == -1.0


class TestLogDecomposition:
    def _estimate(self, lam_scaled, sig_dollar):
        from infoval.estimators import StockDayEstimate
        c = 1e6
        prod = lam_scaled * sig_dollar**2 * c
        return StockDayEstimate("T", "d", prod, lam_scaled / c, lam_scaled, 0.0,
                                sig_dollar, prod, 10, False)

    def test_unit_values(self):
        est = self._estimate(1.0, 1.0)
        assert log_decomposition(est) == (0.0, 0.0)

    def test_e_values(self):
        est = self._estimate(np.e, np.sqrt(np.e))
        a, b = log_decomposition(est)
        assert a == pytest.approx(1.0) and b == pytest.approx(1.0)

    def test_sum_recovers_product(self):
        rng = np.random.default_rng(4)
        for _ in range(20):
            est = self._estimate(rng.lognormal(), rng.lognormal())
            a, b = log_decomposition(est)
            assert np.exp(a + b) == pytest.approx(est.omega_product / 1e6, rel=1e-10)

    def test_nonpositive_impact_excluded(self):
        est = self._estimate(1.0, 1.0)
        est.lambda_hat = -1e-9
        est.negative_impact = True
        with pytest.raises(ValueError):
            log_decomposition(est)


class TestWinsorize:
    def test_zero_fraction_is_identity(self, rng):
        x = rng.normal(size=100)
        assert np.array_equal(winsorize(x, 0.0), x)

    def test_clips_to_quantiles(self):
        x = np.arange(1.0, 101.0)
        w = winsorize(x, 0.01)
        lo, hi = np.quantile(x, [0.01, 0.99])
        assert w.min() == pytest.approx(lo) and w.max() == pytest.approx(hi)
        assert w.min() >= np.quantile(x, 0.01)

    def test_shrinks_dispersion_of_normal_sample(self, rng):
        x = rng.normal(size=100_000)
        assert winsorize(x, 0.01).std() < x.std()

    def test_empty_series(self):
        assert winsorize(np.array([]), 0.01).size == 0

    def test_nan_passthrough(self):
        x = np.array([1.0, np.nan, 100.0, -50.0, 2.0, 3.0])
        w = winsorize(x, 0.2)
        assert np.isnan(w[1])
        assert w[2] < 100.0

    def test_bad_fraction_rejected(self):
        with pytest.raises(ValueError):
            winsorize(np.array([1.0]), 0.5)


class TestDeflate:
    def test_identity(self):
        assert deflate(100.0, 1.0) == 100.0

    def test_scaling(self):
        assert deflate(100.0, 1.25) == pytest.approx(125.0)

    def test_round_trip(self):
        x = 42.0
        assert deflate(deflate(x, 1.3), 1 / 1.3) == pytest.approx(x)

    def test_bad_factor(self):
        with pytest.raises(ValueError):
            deflate(1.0, 0.0)


class TestStockDayEstimate:
    def test_fields_consistent_on_simulated_session(self):
        p = SimParams(sigma_v=0.5, sigma_z=1.0, p0=50.0, n_steps=390, seed=2)
        bars = bars_from_session(simulate_kyle(p))
        sc = ScalingConstants(day_year_fraction=1.0)
        est = estimate_stock_day(bars, sc)
        assert est.negative_impact == (est.lambda_hat <= 0)
        lam_dollar = est.lambda_hat * bars.p_prev_close
        assert est.omega_product == pytest.approx(lam_dollar * est.sigma_y2_hat, rel=1e-12)
        a, b = log_decomposition(est)
        assert a + b == pytest.approx(np.log(est.omega_product / sc.dollars_per_unit),
                                      rel=1e-10)

    def test_undefined_slope_flagged(self):
        bars = make_bars([0.1, 0.2], [0.0, 0.0])
        est = estimate_stock_day(bars)
        assert np.isnan(est.lambda_hat)
        assert est.negative_impact

    def test_frame_columns(self):
        bars = make_bars([0.1, -0.1], [10.0, -20.0], p_open=25.0, p_prev_close=25.0)
        frame = estimates_to_frame([estimate_stock_day(bars)])
        assert list(frame.columns) == ["symbol", "date", "omega_hat", "lambda_hat",
                                       "lambda_scaled", "sigma_y2_hat",
                                       "omega_product", "n_bars", "negative_impact"]

    def test_negative_omega_incidence_shrinks_with_resolution(self):
        fracs = {}
        for n in (30, 390):
            p = SimParams(sigma_v=1.0, sigma_z=1.0, sigma_w=8.0, n_steps=n,
                          n_paths=3000, seed=21)
            batch = simulate_batch(p)
            om = np.einsum("ij,ij->i", np.diff(batch.prices, axis=1),
                           np.diff(batch.total_flow, axis=1))
            fracs[n] = float(np.mean(om < 0))
        assert fracs[30] > 0.0
        assert fracs[390] < fracs[30]

    def test_decomposition_agrees_with_covariation_in_the_mean(self):
        p = SimParams(sigma_v=0.5, sigma_z=1.0, p0=50.0, n_steps=390,
                      n_paths=800, seed=13)
        batch = simulate_batch(p)
        sc = ScalingConstants(day_year_fraction=1.0)
        oms, prods = [], []
        for i in range(len(batch)):
            est = estimate_stock_day(bars_from_session(batch.session(i)), sc)
            oms.append(est.omega_hat)
            prods.append(est.omega_product)
        oms, prods = np.asarray(oms), np.asarray(prods)
        se = oms.std(ddof=1) / np.sqrt(oms.size)
        assert abs(oms.mean() - prods.mean()) < 2 * se

    def test_corr_dp_dy_perfect_when_price_tracks_flow(self):
        s = simulate_kyle(SimParams(sigma_v=1.0, sigma_z=1.0, n_steps=100, seed=9))
        assert corr_dp_dy(bars_from_session(s)) == pytest.approx(1.0)
