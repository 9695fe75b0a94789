"""Per-stock-day information-value estimators and scaling arithmetic.

The headline estimator is the annualized price-change / order-flow
covariation

    omega_hat = (1 / T) * sum_i dP_i * dY_i        [dollars per year]

with T the year fraction covered by the session (1/252 for one trading day).
Its product-form counterpart multiplies the price impact per share of flow by
the annualized flow variance:

    omega_product = (lambda_hat * P0) * sigma_y2_hat

where lambda_hat is the no-intercept slope of log returns on flow, P0 the
prior close, and sigma_y2_hat the sample flow variance scaled to annual
units.  The day-level product lambda * sigma_y^2 * T is re-annualized by 1/T,
so the year fraction cancels.
"""

from dataclasses import dataclass

import numpy as np
import pandas as pd

from .microdata import BarSeries

__all__ = [
    "ScalingConstants",
    "StockDayEstimate",
    "omega_hat",
    "lambda_hat",
    "sigma_y2_hat",
    "omega_product",
    "log_decomposition",
    "winsorize",
    "deflate",
    "corr_dp_dy",
    "estimate_stock_day",
    "estimates_to_frame",
    "write_estimates_csv",
    "ESTIMATE_COLUMNS",
]

TRADING_DAY_YEAR_FRACTION = 1.0 / 252.0

ESTIMATE_COLUMNS = ["symbol", "date", "omega_hat", "lambda_hat", "lambda_scaled",
                    "sigma_y2_hat", "omega_product", "n_bars", "negative_impact"]


@dataclass(frozen=True)
class ScalingConstants:
    """Reporting scales: dollars per reported unit (1e6 = report in millions),
    a CPI deflator to the base period, and the year fraction per trading day."""

    dollars_per_unit: float = 1e6
    cpi_factor: float = 1.0
    day_year_fraction: float = TRADING_DAY_YEAR_FRACTION

    def __post_init__(self):
        if not self.dollars_per_unit > 0:
            raise ValueError("dollars_per_unit must be positive")
        if not self.cpi_factor > 0:
            raise ValueError("cpi_factor must be positive")
        if not self.day_year_fraction > 0:
            raise ValueError("day_year_fraction must be positive")


@dataclass
class StockDayEstimate:
    symbol: str
    date: str
    omega_hat: float        # dollars / year
    lambda_hat: float       # return per share of flow (raw regression slope)
    lambda_scaled: float    # return per reporting unit of dollars traded
    sigma_y2_hat: float     # shares^2 / year
    sigma_y_dollar: float   # reporting units / sqrt(year)
    omega_product: float    # dollars / year, product-form estimate
    n_bars: int
    negative_impact: bool


def omega_hat(bars: BarSeries, year_fraction: float) -> float:
    """Annualized sum of per-bar price change times net signed flow."""
    if bars.n_bars < 1:
        raise ValueError("omega_hat needs at least one bar")
    if not year_fraction > 0:
        raise ValueError("year_fraction must be positive")
    return float(np.sum(bars.dp * bars.dy) / year_fraction)


def _bar_levels(bars: BarSeries) -> tuple[np.ndarray, np.ndarray]:
    prev = np.concatenate(([bars.p_open], bars.last_price[:-1]))
    return prev, bars.last_price


def lambda_hat(bars: BarSeries, mode: str = "log", intercept: bool = False) -> float:
    """Least-squares slope of per-bar returns on net signed flow.

    ``mode="log"`` regresses log price relatives (the baseline), ``"levels"``
    regresses raw price changes.  Without an intercept, bars with zero flow
    contribute nothing to either sum.
    """
    if bars.n_bars < 2:
        raise ValueError("lambda_hat needs at least two bars")
    dy = bars.dy
    if not np.any(dy != 0):
        raise ValueError("order flow is identically zero; slope is undefined")
    if mode == "log":
        prev, cur = _bar_levels(bars)
        r = np.log(cur / prev)
    elif mode == "levels":
        r = bars.dp
    else:
        raise ValueError(f"unknown lambda mode: {mode!r}")
    x = dy.astype(float)
    if intercept:
        r = r - r.mean()
        x = x - x.mean()
    denom = float(np.sum(x * x))
    if denom == 0:
        raise ValueError("order flow has no variation; slope is undefined")
    return float(np.sum(r * x) / denom)


def sigma_y2_hat(bars: BarSeries, year_fraction: float) -> float:
    """Sample variance of per-bar flow, scaled to annual units by the number
    of bars per year (n_bars / year_fraction)."""
    n = bars.n_bars
    if n < 2:
        raise ValueError("sigma_y2_hat needs at least two bars")
    if not year_fraction > 0:
        raise ValueError("year_fraction must be positive")
    var = float(np.var(bars.dy, ddof=1))
    return var * n / year_fraction


def omega_product(lambda_dollar: float, sigma_y2_annual: float) -> float:
    """Product-form annualized value: price impact (dollars per share^2)
    times annualized flow variance (shares^2 per year).  The day-level
    product would carry a factor T that the annualization removes again."""
    return float(lambda_dollar) * float(sigma_y2_annual)


def log_decomposition(est: StockDayEstimate) -> tuple[float, float]:
    """Log split of the product-form estimate into impact and flow terms.

    Returns (log lambda_scaled, log sigma_y_dollar^2); the two add up to
    log(omega_product / dollars_per_unit).  Estimates with nonpositive price
    impact are excluded from log-scale reporting and raise here.
    """
    if est.negative_impact or not est.lambda_hat > 0:
        raise ValueError(f"{est.symbol} {est.date}: nonpositive price impact; "
                         "observation is excluded from log-scale reporting")
    return float(np.log(est.lambda_scaled)), float(2.0 * np.log(est.sigma_y_dollar))


def winsorize(values, p: float = 0.01) -> np.ndarray:
    """Clip a series at its p and 1-p empirical quantiles (linear
    interpolation).  NaNs pass through untouched; p = 0 is a no-op."""
    values = np.asarray(values, dtype=float)
    if not 0 <= p < 0.5:
        raise ValueError("tail fraction must satisfy 0 <= p < 0.5")
    if values.size == 0 or p == 0:
        return values.copy()
    finite = values[np.isfinite(values)]
    if finite.size == 0:
        return values.copy()
    lo, hi = np.quantile(finite, [p, 1.0 - p], method="linear")
    return np.clip(values, lo, hi)


def deflate(nominal, cpi_factor: float):
    """Convert nominal dollars to base-period real dollars."""
    if not cpi_factor > 0:
        raise ValueError("cpi_factor must be positive")
    return nominal * cpi_factor


def corr_dp_dy(bars: BarSeries) -> float:
    """Within-day correlation of per-bar price changes and flow."""
    dp, dy = bars.dp, bars.dy
    if dp.size < 2:
        return float("nan")
    sd = dp.std() * dy.std()
    if sd == 0:
        return float("nan")
    return float(np.mean((dp - dp.mean()) * (dy - dy.mean())) / sd)


def estimate_stock_day(bars: BarSeries, scaling: ScalingConstants = ScalingConstants(),
                       lambda_mode: str = "log", intercept: bool = False) -> StockDayEstimate:
    """Full per-stock-day estimate from a bar series.

    The prior close scales impact and flow into dollar units; when it is
    missing the session's first trade price stands in.  An undefined slope
    (no nonzero flow) yields NaN impact fields flagged as excluded.
    """
    t = scaling.day_year_fraction
    om = omega_hat(bars, t)
    p0 = bars.p_prev_close
    if not np.isfinite(p0) or p0 <= 0:
        p0 = bars.p_open
    try:
        lam = lambda_hat(bars, mode=lambda_mode, intercept=intercept)
    except ValueError:
        lam = float("nan")
    try:
        sy2 = sigma_y2_hat(bars, t)
    except ValueError:
        sy2 = float("nan")

    if lambda_mode == "levels":
        lam_dollar = lam
        lam_return = lam / p0 if np.isfinite(lam) else float("nan")
    else:
        lam_return = lam
        lam_dollar = lam * p0 if np.isfinite(lam) else float("nan")

    c = scaling.dollars_per_unit
    lam_scaled = lam_return * c / p0 if np.isfinite(lam_return) else float("nan")
    sig_dollar = (np.sqrt(sy2) * p0 / c) if np.isfinite(sy2) else float("nan")
    prod = omega_product(lam_dollar, sy2) if np.isfinite(lam_dollar) and np.isfinite(sy2) else float("nan")
    negative = bool(not np.isfinite(lam) or lam <= 0)
    return StockDayEstimate(
        symbol=bars.symbol,
        date=bars.date,
        omega_hat=om,
        lambda_hat=lam if lambda_mode != "levels" else lam_return,
        lambda_scaled=lam_scaled,
        sigma_y2_hat=sy2,
        sigma_y_dollar=sig_dollar,
        omega_product=prod,
        n_bars=bars.n_bars,
        negative_impact=negative,
    )


def estimates_to_frame(estimates) -> pd.DataFrame:
    """Stack estimates into the per-stock-day output table."""
    rows = [{
        "symbol": e.symbol,
        "date": e.date,
        "omega_hat": e.omega_hat,
        "lambda_hat": e.lambda_hat,
        "lambda_scaled": e.lambda_scaled,
        "sigma_y2_hat": e.sigma_y2_hat,
        "omega_product": e.omega_product,
        "n_bars": e.n_bars,
        "negative_impact": int(e.negative_impact),
    } for e in estimates]
    return pd.DataFrame(rows, columns=ESTIMATE_COLUMNS)


def write_estimates_csv(frame: pd.DataFrame, path) -> None:
    frame.to_csv(path, index=False, float_format="%.17g")
