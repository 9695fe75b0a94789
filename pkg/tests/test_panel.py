import warnings

import numpy as np
import pandas as pd
import pytest
from hypothesis import given, settings, strategies as st

from infoval.panel import (
    aggregate_pct_mcap,
    attach_log_columns,
    characteristics,
    designate_earnings_day,
    earnings_event_study,
    fe_regression,
    join_characteristics,
)

from conftest import make_fe_panel, dummy_ols


def estimate_frame(rows):
    base = {"omega_hat": 1.0, "lambda_hat": 1e-6, "lambda_scaled": 1.0,
            "sigma_y2_hat": 1.0, "omega_product": 1e6, "n_bars": 390,
            "negative_impact": 0}
    out = []
    for r in rows:
        d = dict(base)
        d.update(r)
        out.append(d)
    return pd.DataFrame(out)


class TestAggregate:
    def test_single_stock_ratio(self):
        df = estimate_frame([{"symbol": "A", "date": "2024-01-02",
                              "omega_hat": 4.0, "mcap": 10_000.0}])
        out = aggregate_pct_mcap(df, "day")
        assert out["pct_of_mcap"].iloc[0] == pytest.approx(0.04)

    def test_two_stock_ratio(self):
        df = estimate_frame([
            {"symbol": "A", "date": "2024-01-02", "omega_hat": 1.0, "mcap": 100.0},
            {"symbol": "B", "date": "2024-01-02", "omega_hat": 3.0, "mcap": 100.0},
        ])
        out = aggregate_pct_mcap(df, "day")
        assert out["pct_of_mcap"].iloc[0] == pytest.approx(2.0)

    def test_brute_force_sum(self, rng):
        rows = []
        for d in ("2024-01-02", "2024-01-03"):
            for i in range(30):
                rows.append({"symbol": f"S{i}", "date": d,
                             "omega_hat": float(rng.normal(5.0, 2.0)),
                             "mcap": float(rng.uniform(1e3, 1e5))})
        df = estimate_frame(rows)
        out = aggregate_pct_mcap(df, "day").set_index("period")["pct_of_mcap"]
        for d, g in df.groupby("date"):
            manual = 100.0 * g["omega_hat"].sum() / g["mcap"].sum()
            assert out[d] == pytest.approx(manual, rel=1e-12)

    def test_zero_mcap_rejected(self):
        df = estimate_frame([{"symbol": "A", "date": "2024-01-02",
                              "omega_hat": 1.0, "mcap": 0.0}])
        with pytest.raises(ValueError):
            aggregate_pct_mcap(df, "day")

    def test_month_equals_mcap_weighted_day_average_under_constant_mcap(self, rng):
        rows = []
        dates = pd.date_range("2024-01-01", periods=21, freq="B").strftime("%Y-%m-%d")
        for d in dates:
            for i in range(10):
                rows.append({"symbol": f"S{i}", "date": d,
                             "omega_hat": float(rng.normal(2.0, 1.0)),
                             "mcap": 1000.0 * (i + 1)})
        df = estimate_frame(rows)
        day = aggregate_pct_mcap(df, "day")
        month = aggregate_pct_mcap(df, "month")
        total_mcap = sum(1000.0 * (i + 1) for i in range(10))
        weighted = float(np.average(day["pct_of_mcap"],
                                    weights=np.full(len(day), total_mcap)))
        assert month["pct_of_mcap"].iloc[0] == pytest.approx(weighted, rel=1e-10)


class TestEarningsDay:
    def _series(self, ratios):
        idx = pd.to_datetime(["2024-03-04", "2024-03-05", "2024-03-06"])
        market = pd.Series([1e9, 1e9, 1e9], index=idx)
        firm = pd.Series(np.asarray(ratios) * 1e9, index=idx)
        return firm, market, idx

    def test_interior_argmax_keeps_official(self):
        firm, market, idx = self._series([0.1, 0.5, 0.2])
        assert designate_earnings_day(firm, market, idx[1]) == idx[1]

    def test_day_before_wins(self):
        firm, market, idx = self._series([0.9, 0.5, 0.2])
        assert designate_earnings_day(firm, market, idx[1]) == idx[0]

    def test_tie_goes_to_earliest(self):
        firm, market, idx = self._series([0.5, 0.5, 0.2])
        assert designate_earnings_day(firm, market, idx[1]) == idx[0]

    def test_missing_volume_falls_back_with_warning(self):
        firm, market, idx = self._series([0.1, 0.5, 0.2])
        firm.iloc[0] = np.nan
        with pytest.warns(UserWarning):
            assert designate_earnings_day(firm, market, idx[1]) == idx[1]


def synthetic_log_panel(rng, n_stocks=40, n_days=120, day0_effect=0.0,
                        events_per_stock=2, window=22):
    dates = pd.date_range("2023-01-02", periods=n_days, freq="B").strftime("%Y-%m-%d")
    rows = []
    interior = 2 * window < n_days - 1
    lo, hi = (window, n_days - window) if interior else (0, n_days)
    for i in range(n_stocks):
        k = min(events_per_stock, hi - lo)
        events = set(rng.choice(np.arange(lo, hi), size=k, replace=False)) if k else set()
        for t, d in enumerate(dates):
            e = int(t in events)
            log_om = 0.5 + 0.3 * rng.normal() + day0_effect * e
            rows.append({"symbol": f"S{i:03d}", "date": d, "earnings": e,
                         "log_omega": log_om,
                         "log_lambda_scaled": 0.1 * rng.normal(),
                         "log_sigma_dollar_sq": 0.1 * rng.normal()})
    return pd.DataFrame(rows)


class TestEventStudy:
    def test_constant_panel_gives_flat_degenerate_curve(self, rng):
        df = synthetic_log_panel(rng, n_stocks=10, n_days=80)
        df["log_omega"] = 1.5
        res = earnings_event_study(df, window=5, value_cols=("log_omega",))
        curve = res.curve("log_omega")
        assert np.allclose(curve["mean"], 1.5)
        assert np.allclose(curve["hi"] - curve["lo"], 0.0, atol=1e-12)

    def test_bands_symmetric(self, rng):
        df = synthetic_log_panel(rng)
        res = earnings_event_study(df, window=10, value_cols=("log_omega",))
        curve = res.curve("log_omega")
        assert np.allclose(curve["hi"] - curve["mean"], curve["mean"] - curve["lo"])

    @pytest.mark.parametrize("delta", [0.5, 1.27])
    def test_injected_day0_effect_recovered(self, delta):
        rng = np.random.default_rng(404)
        df = synthetic_log_panel(rng, n_stocks=200, n_days=250, day0_effect=delta,
                                 events_per_stock=3)
        res = earnings_event_study(df, window=22, value_cols=("log_omega",))
        curve = res.curve("log_omega").set_index("relative_day")
        day0 = curve.loc[0]
        off = curve.drop(index=0)
        base = off["mean"].mean()
        se0 = (day0["hi"] - day0["mean"]) / 1.96
        assert abs((day0["mean"] - base) - delta) < 2 * se0 + 0.02

    def test_shuffled_events_show_no_spike(self, rng):
        delta = 1.27
        df = synthetic_log_panel(rng, n_stocks=60, n_days=150, day0_effect=delta)
        # placebo: reassign the earnings flags to random days
        df["earnings"] = rng.permutation(df["earnings"].to_numpy())
        res = earnings_event_study(df, window=10, value_cols=("log_omega",))
        curve = res.curve("log_omega").set_index("relative_day")
        day0 = curve.loc[0]
        off = curve.drop(index=0)["mean"].mean()
        se0 = (day0["hi"] - day0["mean"]) / 1.96
        assert abs(day0["mean"] - off) < max(4 * se0, 0.25)

    def test_no_events_gives_empty_result(self, rng):
        df = synthetic_log_panel(rng, n_stocks=5, n_days=40)
        df["earnings"] = 0
        res = earnings_event_study(df, window=5)
        assert res.empty

    def test_excluded_rows_drop_out(self, rng):
        df = synthetic_log_panel(rng, n_stocks=10, n_days=60)
        df.loc[df.index[::2], "log_omega"] = np.nan
        res = earnings_event_study(df, window=5, value_cols=("log_omega",))
        assert res.curve("log_omega")["n_obs"].sum() > 0


class TestFeRegression:
    def test_plain_ols_slope(self, rng):
        n = 400
        x = rng.normal(size=n)
        y = 2.0 * x + 0.1 * rng.normal(size=n)
        df = pd.DataFrame({"symbol": "A", "date": [f"d{i}" for i in range(n)],
                           "y": y, "x": x})
        res = fe_regression(df, "y", ["x"], fixed_effects=(), clusters=())
        assert res.params["x"] == pytest.approx(2.0, abs=0.05)
        assert "const" in res.params

    def test_stock_effects_absorb_confound(self, rng):
        # x varies only across stocks; within stock it is uncorrelated noise
        rows = []
        for i in range(30):
            base = rng.normal()
            for t in range(20):
                x = base + 0.01 * rng.normal()
                y = 5.0 * base + rng.normal() * 0.1
                rows.append({"symbol": f"S{i}", "date": f"d{t:02d}", "x": x, "y": y})
        df = pd.DataFrame(rows)
        pooled = fe_regression(df, "y", ["x"], fixed_effects=(), clusters=())
        within = fe_regression(df, "y", ["x"], fixed_effects=("stock",),
                               clusters=("stock",))
        assert abs(pooled.params["x"]) > 2.0
        assert abs(within.params["x"]) < 0.5

    def test_two_way_fe_matches_dummy_ols(self, rng):
        df = make_fe_panel(rng, 8, 7, betas=(2.0, -1.0), missing_frac=0.15)
        res = fe_regression(df, "y", ["x0", "x1"])
        oracle = dummy_ols(df, "y", ["x0", "x1"], ("stock", "day"))
        for t in ("x0", "x1"):
            assert res.params[t] == pytest.approx(oracle[t], abs=1e-8)

    @settings(max_examples=25, deadline=None)
    @given(seed=st.integers(0, 10_000))
    def test_two_way_fe_matches_dummy_ols_property(self, seed):
        rng = np.random.default_rng(seed)
        n_stocks = int(rng.integers(3, 10))
        n_days = int(rng.integers(3, 10))
        df = make_fe_panel(rng, n_stocks, n_days, betas=(1.5,), missing_frac=0.1)
        if df["symbol"].nunique() < 2 or df["date"].nunique() < 2:
            return
        res = fe_regression(df, "y", ["x0"])
        oracle = dummy_ols(df, "y", ["x0"], ("stock", "day"))
        assert res.params["x0"] == pytest.approx(oracle["x0"], abs=1e-8)

    def test_cluster_vcov_positive_semidefinite(self, rng):
        for _ in range(10):
            df = make_fe_panel(rng, 10, 12, betas=(1.0, 0.5), missing_frac=0.1)
            res = fe_regression(df, "y", ["x0", "x1"])
            eig = np.linalg.eigvalsh(res.vcov)
            assert eig.min() >= -1e-10 * max(eig.max(), 1.0)

    def test_within_r2_not_above_r2(self, rng):
        df = make_fe_panel(rng, 12, 10, betas=(1.0,))
        res = fe_regression(df, "y", ["x0"])
        assert res.within_r2 <= res.r2 + 1e-12

    def test_collinear_regressor_dropped_with_warning(self, rng):
        df = make_fe_panel(rng, 6, 6, betas=(1.0,))
        df["x_dup"] = 2.0 * df["x0"]
        with pytest.warns(UserWarning):
            res = fe_regression(df, "y", ["x0", "x_dup"])
        assert res.dropped == ["x_dup"]

    def test_singleton_clusters_rejected(self, rng):
        df = make_fe_panel(rng, 6, 6, betas=(1.0,))
        df["row_id"] = [f"r{i}" for i in range(len(df))]
        with pytest.raises(ValueError):
            fe_regression(df, "y", ["x0"], fixed_effects=(), clusters=("row_id",))

    def test_earnings_effect_recovered_with_clustered_errors(self, rng):
        df = make_fe_panel(rng, 50, 60, betas=(1.0,), earnings_effect=1.27,
                           earnings_frac=0.05, noise=0.5)
        res = fe_regression(df, "y", ["x0", "earnings"])
        assert abs(res.params["earnings"] - 1.27) < 2 * res.se["earnings"] + 0.05

    def test_stars_thresholds(self, rng):
        df = make_fe_panel(rng, 20, 20, betas=(3.0,), noise=0.1)
        res = fe_regression(df, "y", ["x0"])
        assert res.stars("x0") == "***"
        frame = res.to_frame()
        assert list(frame.columns) == ["term", "coef", "se", "stars", "r2",
                                       "within_r2", "n"]


class TestCharacteristics:
    def test_flat_price_size(self):
        months = pd.period_range("2023-01", "2024-02", freq="M")
        monthly = pd.DataFrame({
            "symbol": "A", "month": [str(m) for m in months],
            "price": 10.0, "shares": 100.0,
        })
        book = pd.DataFrame({"symbol": ["A"], "year": [2023], "book_equity": [500.0]})
        out = characteristics(monthly, book).set_index("month")
        assert out.loc["2024-02", "size"] == pytest.approx(np.log(1000.0))

    def test_momentum_eleven_months_of_one_percent(self):
        months = pd.period_range("2023-01", "2024-02", freq="M")
        prices = 10.0 * 1.01 ** np.arange(len(months))
        monthly = pd.DataFrame({
            "symbol": "A", "month": [str(m) for m in months],
            "price": prices, "shares": 100.0,
        })
        book = pd.DataFrame({"symbol": ["A"], "year": [2023], "book_equity": [1.0]})
        out = characteristics(monthly, book).set_index("month")
        assert out.loc["2024-02", "momentum"] == pytest.approx(1.01**11 - 1, rel=1e-10)

    def test_insufficient_history_is_missing(self):
        monthly = pd.DataFrame({
            "symbol": "A", "month": ["2024-01", "2024-02"],
            "price": [10.0, 11.0], "shares": 100.0,
        })
        book = pd.DataFrame({"symbol": ["A"], "year": [2023], "book_equity": [1.0]})
        out = characteristics(monthly, book).set_index("month")
        assert np.isnan(out.loc["2024-02", "momentum"])

    def test_three_stock_fixture_hand_values(self):
        months = pd.period_range("2022-06", "2024-03", freq="M")
        rows = []
        specs = {"A": (20.0, 0.01, 50.0), "B": (40.0, -0.005, 200.0),
                 "C": (5.0, 0.02, 1000.0)}
        for sym, (p0, g, sh) in specs.items():
            for j, m in enumerate(months):
                rows.append({"symbol": sym, "month": str(m),
                             "price": p0 * (1 + g) ** j, "shares": sh})
        monthly = pd.DataFrame(rows)
        book = pd.DataFrame({
            "symbol": ["A", "A", "B", "B", "C", "C"],
            "year": [2022, 2023] * 3,
            "book_equity": [400.0, 450.0, 3000.0, 3100.0, 2000.0, 2200.0],
        })
        out = characteristics(monthly, book)
        out = out.set_index(["symbol", "month"])
        # spreadsheet-style checks for A at 2024-02 (index 20 in the series)
        p_a = 20.0 * 1.01**20
        assert out.loc[("A", "2024-02"), "size"] == pytest.approx(np.log(p_a * 50.0))
        assert out.loc[("A", "2024-02"), "momentum"] == pytest.approx(1.01**11 - 1)
        # beme: book for June 2023 over market equity at December 2023 (idx 18)
        me_dec = 20.0 * 1.01**18 * 50.0
        assert out.loc[("A", "2024-02"), "beme"] == pytest.approx(450.0 / me_dec)
        # B has negative drift: momentum below zero
        assert out.loc[("B", "2024-02"), "momentum"] == pytest.approx(0.995**11 - 1)

    def test_join_on_prior_month(self):
        chars = pd.DataFrame({
            "symbol": ["A"], "month": ["2024-01"], "size": [1.0], "beme": [0.5],
            "momentum": [0.1], "mcap": [1e9],
        })
        est = estimate_frame([{"symbol": "A", "date": "2024-02-15"}])
        joined = join_characteristics(est, chars)
        assert joined["size"].iloc[0] == 1.0


class TestWinsorizePanel:
    def test_panel_level_clipping(self, rng):
        from infoval.panel import winsorize_panel
        df = estimate_frame([{"symbol": f"S{i}", "date": "2024-01-02",
                              "omega_hat": float(v)}
                             for i, v in enumerate(rng.normal(0, 1, 200))])
        out = winsorize_panel(df, p=0.05)
        assert out["omega_hat"].std() < df["omega_hat"].std()
        assert len(out) == len(df)

    def test_by_day_variant_clips_within_dates(self, rng):
        from infoval.panel import winsorize_panel
        rows = []
        for d, scale in (("2024-01-02", 1.0), ("2024-01-03", 100.0)):
            for i in range(50):
                rows.append({"symbol": f"S{i}", "date": d,
                             "omega_hat": float(rng.normal(0, scale))})
        df = estimate_frame(rows)
        out = winsorize_panel(df, p=0.1, by_day=True)
        for d, g in out.groupby("date"):
            raw = df[df["date"] == d]["omega_hat"]
            assert g["omega_hat"].max() <= raw.max()


class TestLogColumns:
    def test_exclusions_and_identity(self):
        df = estimate_frame([
            {"symbol": "A", "date": "2024-01-02", "omega_hat": 2e6,
             "lambda_scaled": 2.0, "omega_product": 3e6},
            {"symbol": "B", "date": "2024-01-02", "omega_hat": -1.0},
            {"symbol": "C", "date": "2024-01-02", "negative_impact": 1},
        ])
        out = attach_log_columns(df)
        assert out["log_omega"].iloc[0] == pytest.approx(np.log(2.0))
        assert np.isnan(out["log_omega"].iloc[1])
        assert np.isnan(out["log_lambda_scaled"].iloc[2])
        total = out["log_lambda_scaled"].iloc[0] + out["log_sigma_dollar_sq"].iloc[0]
        assert total == pytest.approx(np.log(3.0), rel=1e-10)
