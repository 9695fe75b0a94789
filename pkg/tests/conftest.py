import sys
from pathlib import Path

import numpy as np
import pandas as pd
import pytest

SRC = Path(__file__).resolve().parents[1] / "src"
if str(SRC) not in sys.path:
    sys.path.insert(0, str(SRC))

from infoval.microdata import Trades, Quotes  # noqa: E402


def make_at_quote_tape(rng: np.random.Generator, n_quotes: int = 200,
                       trades_per_quote: int = 3):
    """Quotes with a strictly positive spread and trades printing exactly at
    the prevailing bid or ask; returns (trades, quotes, true_sides)."""
    q_ts = (1 + np.arange(n_quotes)) * 1_000_000
    mid = 20.0 + np.cumsum(rng.integers(-2, 3, size=n_quotes)) * 0.01
    half = rng.integers(1, 4, size=n_quotes) * 0.01
    bid = np.round(mid - half, 2)
    ask = np.round(mid + half, 2)

    t_ts, t_px, t_sz, sides = [], [], [], []
    for i in range(n_quotes):
        for j in range(trades_per_quote):
            side = int(rng.choice([-1, 1]))
            t_ts.append(q_ts[i] + 100 + j * 10)
            t_px.append(ask[i] if side == 1 else bid[i])
            t_sz.append(float(rng.integers(1, 20) * 100))
            sides.append(side)
    trades = Trades(np.asarray(t_ts), np.asarray(t_px), np.asarray(t_sz))
    quotes = Quotes(q_ts, bid, ask)
    return trades, quotes, np.asarray(sides, dtype=np.int8)


def make_fe_panel(rng: np.random.Generator, n_stocks: int, n_days: int,
                  betas=(2.0, -1.0), earnings_effect: float = 0.0,
                  earnings_frac: float = 0.0, missing_frac: float = 0.0,
                  noise: float = 1.0) -> pd.DataFrame:
    """Random stock-day panel with additive stock/day effects and known
    coefficients, for exercising the fixed-effects machinery."""
    stock_fe = rng.normal(0, 1, n_stocks)
    day_fe = rng.normal(0, 1, n_days)
    dates = pd.date_range("2020-01-01", periods=n_days, freq="B").strftime("%Y-%m-%d")
    rows = []
    for i in range(n_stocks):
        for t in range(n_days):
            if missing_frac and rng.random() < missing_frac:
                continue
            x = rng.normal(0, 1, len(betas))
            e = 0
            if earnings_frac and rng.random() < earnings_frac:
                e = 1
            y = stock_fe[i] + day_fe[t] + float(np.dot(betas, x))
            y += earnings_effect * e + noise * rng.normal()
            row = {"symbol": f"S{i:03d}", "date": dates[t], "y": y, "earnings": e}
            for j, xv in enumerate(x):
                row[f"x{j}"] = xv
            rows.append(row)
    return pd.DataFrame(rows)


def dummy_ols(df: pd.DataFrame, depvar: str, regressors, fixed_effects) -> dict:
    """Brute-force dummy-variable OLS oracle for the within estimator."""
    y = df[depvar].to_numpy(dtype=float)
    cols = [df[r].to_numpy(dtype=float) for r in regressors]
    design = [np.ones(len(df))]
    for dim in fixed_effects:
        col = {"stock": "symbol", "day": "date"}[dim]
        codes, uniq = pd.factorize(df[col])
        for level in range(1, len(uniq)):
            design.append((codes == level).astype(float))
    x = np.column_stack(design + cols)
    beta, *_ = np.linalg.lstsq(x, y, rcond=None)
    return dict(zip(regressors, beta[-len(regressors):]))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
