"""Panel analytics: joins, aggregates, earnings event studies, and
fixed-effects regressions with two-way cluster-robust standard errors.

Panels are pandas DataFrames keyed by (symbol, date).  Log-scale columns are
derived from the estimate table and are NaN wherever the paper-style
exclusion applies (nonpositive impact or nonpositive level estimate); level
aggregates keep every row.
"""

from dataclasses import dataclass, field
import warnings

import numpy as np
import pandas as pd
from scipy import stats as sps

__all__ = [
    "RegressionResult",
    "EventStudyResult",
    "load_panel",
    "attach_log_columns",
    "winsorize_panel",
    "aggregate_pct_mcap",
    "designate_earnings_day",
    "earnings_event_study",
    "fe_regression",
    "characteristics",
    "join_characteristics",
]

LOG_VALUE_COLUMNS = ("log_omega", "log_lambda_scaled", "log_sigma_dollar_sq")


def attach_log_columns(df: pd.DataFrame, dollars_per_unit: float = 1e6) -> pd.DataFrame:
    """Add log value-of-information columns, NaN where excluded.

    log_omega uses the covariation estimate in reporting units; the impact
    and flow components come from the product-form fields, so they satisfy
    log_lambda_scaled + log_sigma_dollar_sq = log(omega_product / unit).
    """
    out = df.copy()
    with np.errstate(invalid="ignore", divide="ignore"):
        om = out["omega_hat"].to_numpy(dtype=float)
        out["log_omega"] = np.where(om > 0, np.log(om / dollars_per_unit), np.nan)
        lam = out["lambda_scaled"].to_numpy(dtype=float)
        pos = np.isfinite(lam) & (lam > 0) & (out["negative_impact"].to_numpy() == 0)
        out["log_lambda_scaled"] = np.where(pos, np.log(np.where(pos, lam, 1.0)), np.nan)
        prod = out["omega_product"].to_numpy(dtype=float)
        ok = pos & np.isfinite(prod) & (prod > 0)
        out["log_sigma_dollar_sq"] = np.where(
            ok, np.log(np.where(ok, prod, 1.0) / dollars_per_unit), np.nan
        ) - out["log_lambda_scaled"]
    return out


WINSOR_COLUMNS = ("omega_hat", "lambda_scaled", "sigma_y2_hat", "omega_product")


def winsorize_panel(df: pd.DataFrame, columns=WINSOR_COLUMNS, p: float = 0.01,
                    by_day: bool = False) -> pd.DataFrame:
    """Winsorize estimate variables across the whole panel (the default) or
    within each date when ``by_day`` is set."""
    from .estimators import winsorize

    out = df.copy()
    cols = [c for c in columns if c in out.columns]
    if by_day:
        for c in cols:
            out[c] = out.groupby("date")[c].transform(
                lambda s: winsorize(s.to_numpy(dtype=float), p))
    else:
        for c in cols:
            out[c] = winsorize(out[c].to_numpy(dtype=float), p)
    return out


def load_panel(estimates_csv, characteristics_csv=None,
               dollars_per_unit: float = 1e6, winsor_p: float = 0.0,
               winsor_by_day: bool = False) -> pd.DataFrame:
    """Join the estimate table with firm characteristics on (symbol, date),
    optionally winsorizing the estimate variables first."""
    est = pd.read_csv(estimates_csv, dtype={"symbol": str, "date": str})
    if winsor_p:
        est = winsorize_panel(est, p=winsor_p, by_day=winsor_by_day)
    if characteristics_csv is not None:
        chars = pd.read_csv(characteristics_csv, dtype={"symbol": str, "date": str})
        est = est.merge(chars, on=["symbol", "date"], how="left")
    return attach_log_columns(est, dollars_per_unit)


def aggregate_pct_mcap(panel: pd.DataFrame, grouping: str = "day") -> pd.DataFrame:
    """Aggregate value of information as a percent of aggregate market cap.

    Per period: 100 * sum(omega_hat) / sum(mcap), mcap being the prior-month
    market equity carried on each row.  Level aggregates include negative
    estimates.
    """
    if grouping not in ("day", "month"):
        raise ValueError("grouping must be 'day' or 'month'")
    missing = [c for c in ("date", "omega_hat", "mcap") if c not in panel.columns]
    if missing:
        raise ValueError(f"panel is missing columns {missing}")
    df = panel.dropna(subset=["omega_hat", "mcap"])
    dates = pd.to_datetime(df["date"])
    key = dates.dt.strftime("%Y-%m-%d") if grouping == "day" else dates.dt.strftime("%Y-%m")
    grouped = df.assign(period=key).groupby("period", sort=True)
    omega = grouped["omega_hat"].sum()
    mcap = grouped["mcap"].sum()
    if np.any(mcap <= 0):
        bad = mcap.index[mcap <= 0][0]
        raise ValueError(f"aggregate market cap is nonpositive in period {bad}")
    out = (100.0 * omega / mcap).rename("pct_of_mcap").reset_index()
    return out


def designate_earnings_day(firm_volume: pd.Series, market_volume: pd.Series,
                           official_date, window: int = 1):
    """Assign the announcement to the trading day with the highest firm-to-
    market volume ratio among the official date and its +-window neighbors.

    Ties go to the earliest day.  If the official date is missing from the
    calendar or any candidate volume is missing, fall back to the official
    date with a warning.
    """
    calendar = market_volume.index
    official = pd.Timestamp(official_date)
    pos = calendar.get_indexer([official])
    if pos[0] < 0:
        warnings.warn(f"official date {official.date()} not on the volume calendar; "
                      "keeping the official date")
        return official
    lo = max(0, pos[0] - window)
    hi = min(len(calendar) - 1, pos[0] + window)
    days = calendar[lo:hi + 1]
    firm = firm_volume.reindex(days)
    market = market_volume.reindex(days)
    if firm.isna().any() or market.isna().any() or (market <= 0).any():
        warnings.warn(f"missing volume around {official.date()}; keeping the official date")
        return official
    ratio = (firm / market).to_numpy()
    return days[int(np.argmax(ratio))]


@dataclass
class EventStudyResult:
    """Event-time means with date-clustered 95% bands, one row per
    (variable, relative_day)."""

    curves: pd.DataFrame

    @property
    def empty(self) -> bool:
        return self.curves.empty

    def curve(self, variable: str) -> pd.DataFrame:
        return self.curves[self.curves["variable"] == variable].reset_index(drop=True)


def _clustered_mean(values: np.ndarray, clusters: np.ndarray) -> tuple[float, float]:
    """Mean and its cluster-robust standard error (CR1 scaling)."""
    n = values.size
    mean = float(values.mean())
    codes, _ = pd.factorize(clusters)
    g = codes.max() + 1
    sums = np.bincount(codes, weights=values - mean, minlength=g)
    if g > 1:
        var = g / (g - 1) * float(np.sum(sums**2)) / n**2
    else:
        var = float(np.var(values, ddof=1)) / n if n > 1 else 0.0
    return mean, float(np.sqrt(var))


def earnings_event_study(panel: pd.DataFrame, window: int = 22,
                         value_cols=LOG_VALUE_COLUMNS) -> EventStudyResult:
    """Cross-stock means of log information value around earnings days.

    Relative days are trading-day offsets within each stock's own date
    sequence; bands are +-1.96 date-clustered standard errors.  Rows whose
    log value is NaN (excluded observations) drop out.
    """
    if "earnings" not in panel.columns:
        raise ValueError("panel needs an 'earnings' indicator column")
    df = panel.sort_values(["symbol", "date"]).reset_index(drop=True)
    rows = {c: [] for c in value_cols}
    for _, g in df.groupby("symbol", sort=False):
        event_pos = np.flatnonzero(g["earnings"].to_numpy() == 1)
        if event_pos.size == 0:
            continue
        dates = g["date"].to_numpy()
        vals = {c: g[c].to_numpy(dtype=float) for c in value_cols}
        m = len(g)
        for pos in event_pos:
            lo = max(0, pos - window)
            hi = min(m - 1, pos + window)
            ks = np.arange(lo, hi + 1) - pos
            for c in value_cols:
                v = vals[c][lo:hi + 1]
                keep = np.isfinite(v)
                if keep.any():
                    rows[c].append((ks[keep], v[keep], dates[lo:hi + 1][keep]))
    out = []
    for c in value_cols:
        if not rows[c]:
            continue
        k = np.concatenate([r[0] for r in rows[c]])
        v = np.concatenate([r[1] for r in rows[c]])
        d = np.concatenate([r[2] for r in rows[c]])
        for rel in np.unique(k):
            sel = k == rel
            mean, se = _clustered_mean(v[sel], d[sel])
            out.append({"variable": c, "relative_day": int(rel), "mean": mean,
                        "lo": mean - 1.96 * se, "hi": mean + 1.96 * se,
                        "n_obs": int(sel.sum())})
    curves = pd.DataFrame(out, columns=["variable", "relative_day", "mean",
                                        "lo", "hi", "n_obs"])
    return EventStudyResult(curves)


@dataclass
class RegressionResult:
    terms: list
    params: dict
    se: dict
    tstats: dict
    pvalues: dict
    vcov: np.ndarray
    r2: float
    within_r2: float
    n_obs: int
    fixed_effects: tuple
    clusters: tuple
    dropped: list = field(default_factory=list)

    def stars(self, term: str) -> str:
        p = self.pvalues[term]
        return "***" if p < 0.01 else "**" if p < 0.05 else "*" if p < 0.1 else ""

    def to_frame(self) -> pd.DataFrame:
        rows = [{"term": t, "coef": self.params[t], "se": self.se[t],
                 "stars": self.stars(t), "r2": self.r2,
                 "within_r2": self.within_r2, "n": self.n_obs} for t in self.terms]
        return pd.DataFrame(rows)


def _group_codes(df: pd.DataFrame, dim: str) -> np.ndarray:
    col = {"stock": "symbol", "day": "date"}.get(dim, dim)
    if col not in df.columns:
        raise ValueError(f"panel has no column for dimension {dim!r}")
    return pd.factorize(df[col])[0]


def _demean(mat: np.ndarray, dims: list[np.ndarray], tol: float, max_iter: int) -> np.ndarray:
    """Alternating projections onto the within-transformation."""
    out = mat.copy()
    counts = [np.bincount(codes).astype(float) for codes in dims]
    for _ in range(max_iter):
        for codes, cnt in zip(dims, counts):
            for j in range(out.shape[1]):
                means = np.bincount(codes, weights=out[:, j]) / cnt
                out[:, j] -= means[codes]
        worst = 0.0
        for codes, cnt in zip(dims, counts):
            for j in range(out.shape[1]):
                means = np.bincount(codes, weights=out[:, j]) / cnt
                worst = max(worst, float(np.max(np.abs(means))))
        if worst < tol:
            break
    return out


def _cluster_meat(x: np.ndarray, resid: np.ndarray, codes: np.ndarray) -> np.ndarray:
    scores = x * resid[:, None]
    g = codes.max() + 1
    sums = np.zeros((g, x.shape[1]))
    for j in range(x.shape[1]):
        sums[:, j] = np.bincount(codes, weights=scores[:, j], minlength=g)
    return sums.T @ sums


def fe_regression(panel: pd.DataFrame, depvar: str, regressors: list[str],
                  fixed_effects=("stock", "day"), clusters=("stock", "day"),
                  demean_tol: float = 1e-10, max_iter: int = 10_000) -> RegressionResult:
    """Within-transformed OLS with multi-way cluster-robust covariance.

    Two-way fixed effects are absorbed by iterated demeaning until every
    group mean is below ``demean_tol``.  The covariance combines the
    requested cluster dimensions by inclusion-exclusion (two-way: stock +
    day - stock*day intersection), each piece CR1-scaled.  Regressors that
    are collinear after demeaning are dropped with a warning; a cluster
    dimension in which every cluster is a singleton is an error.
    """
    fixed_effects = tuple(fixed_effects or ())
    clusters = tuple(clusters or ())
    cols = [depvar] + list(regressors)
    df = panel.dropna(subset=[c for c in cols if c in panel.columns]).reset_index(drop=True)
    missing = [c for c in cols if c not in df.columns]
    if missing:
        raise ValueError(f"panel is missing columns {missing}")
    n = len(df)
    if n == 0:
        raise ValueError("no complete observations")

    y = df[depvar].to_numpy(dtype=float)
    x = df[list(regressors)].to_numpy(dtype=float)
    terms = list(regressors)

    if fixed_effects:
        dims = [_group_codes(df, d) for d in fixed_effects]
        stacked = _demean(np.column_stack([y, x]), dims, demean_tol, max_iter)
        yd, xd = stacked[:, 0], stacked[:, 1:]
    else:
        terms = ["const"] + terms
        yd = y
        xd = np.column_stack([np.ones(n), x])

    # drop collinear columns by sequential projection onto the kept ones
    keep = []
    dropped = []
    r_diag_tol = 1e-9
    scale = max(float(np.abs(xd).max(initial=0.0)) * np.sqrt(n), 1.0)
    basis = np.empty((n, 0))
    for j, t in enumerate(terms):
        col = xd[:, j]
        if basis.shape[1]:
            resid = col - basis @ np.linalg.lstsq(basis, col, rcond=None)[0]
        else:
            resid = col
        if np.linalg.norm(resid) <= r_diag_tol * max(np.linalg.norm(col), scale):
            dropped.append(t)
            warnings.warn(f"dropping collinear regressor {t!r}")
        else:
            keep.append(j)
            basis = np.column_stack([basis, col])
    if not keep:
        raise ValueError("all regressors are collinear with the fixed effects")
    xd = xd[:, keep]
    terms = [terms[j] for j in keep]
    k = xd.shape[1]

    xtx = xd.T @ xd
    xtx_inv = np.linalg.inv(xtx)
    beta = xtx_inv @ (xd.T @ yd)
    resid = yd - xd @ beta

    if clusters:
        pieces = []
        cluster_codes = []
        for d in clusters:
            codes = _group_codes(df, d)
            g = codes.max() + 1
            if g == n and n > 1:
                raise ValueError(f"every {d} cluster is a singleton; clustered "
                                 "errors are undefined")
            cluster_codes.append(codes)
            pieces.append((codes, g, +1.0))
        if len(clusters) == 2:
            inter = pd.factorize(pd.Series(cluster_codes[0]).astype(str) + "_" +
                                 pd.Series(cluster_codes[1]).astype(str))[0]
            pieces.append((inter, inter.max() + 1, -1.0))
        vcov = np.zeros((k, k))
        for codes, g, sign in pieces:
            cr1 = (g / (g - 1)) * ((n - 1) / max(n - k, 1)) if g > 1 else 1.0
            meat = _cluster_meat(xd, resid, codes)
            vcov += sign * cr1 * (xtx_inv @ meat @ xtx_inv)
        vcov = 0.5 * (vcov + vcov.T)
    else:
        ssr = float(resid @ resid)
        vcov = xtx_inv * ssr / max(n - k, 1)

    se = np.sqrt(np.clip(np.diag(vcov), 0.0, None))
    ssr = float(resid @ resid)
    sst = float(np.sum((y - y.mean()) ** 2))
    sst_w = float(np.sum((yd - yd.mean()) ** 2))
    r2 = 1.0 - ssr / sst if sst > 0 else float("nan")
    within_r2 = 1.0 - ssr / sst_w if sst_w > 0 else float("nan")

    params = dict(zip(terms, beta))
    ses = dict(zip(terms, se))
    tstats = {t: params[t] / ses[t] if ses[t] > 0 else float("nan") for t in terms}
    pvalues = {t: float(2 * sps.norm.sf(abs(tstats[t]))) if np.isfinite(tstats[t])
               else float("nan") for t in terms}
    return RegressionResult(terms=terms, params=params, se=ses, tstats=tstats,
                            pvalues=pvalues, vcov=vcov, r2=r2, within_r2=within_r2,
                            n_obs=n, fixed_effects=fixed_effects, clusters=clusters,
                            dropped=dropped)


def characteristics(monthly: pd.DataFrame, book: pd.DataFrame) -> pd.DataFrame:
    """Monthly firm characteristics from price/share history and book equity.

    ``monthly`` needs symbol, month (any parseable date), price, shares;
    ``book`` needs symbol, year, book_equity, where the year-y figure becomes
    usable from June of year y.  For a row keyed by month m (consumed by
    daily dates in the following month): size = log market equity at m,
    momentum = cumulative price return over months m-11 .. m-1, beme = book
    equity as of the last June divided by market equity as of the last
    December.  Insufficient history leaves NaN.
    """
    df = monthly.copy()
    df["month"] = pd.PeriodIndex(pd.to_datetime(df["month"]), freq="M")
    df = df.sort_values(["symbol", "month"]).reset_index(drop=True)
    df["me"] = df["price"].astype(float) * df["shares"].astype(float)

    book_map = {(str(r.symbol), int(r.year)): float(r.book_equity)
                for r in book.itertuples()}

    out = []
    for sym, g in df.groupby("symbol", sort=False):
        g = g.reset_index(drop=True)
        months = g["month"].to_numpy()
        price = g["price"].to_numpy(dtype=float)
        me = g["me"].to_numpy(dtype=float)
        by_month = {m: i for i, m in enumerate(months)}
        ret = np.full(len(g), np.nan)
        ret[1:] = price[1:] / price[:-1] - 1.0
        # contiguity check: a gap in the monthly history breaks the return
        ordinals = np.asarray([m.ordinal for m in months])
        contiguous = np.zeros(len(g), dtype=bool)
        contiguous[1:] = np.diff(ordinals) == 1
        for i, m in enumerate(months):
            size = np.log(me[i]) if me[i] > 0 else np.nan
            mom = np.nan
            lags = [by_month.get(m - j) for j in range(1, 12)]
            if all(j is not None for j in lags) and all(contiguous[j] for j in lags):
                mom = float(np.prod(1.0 + ret[lags]) - 1.0)
            june = pd.Period(year=m.year if m.month >= 6 else m.year - 1, month=6, freq="M")
            dec = pd.Period(year=m.year if m.month >= 12 else m.year - 1, month=12, freq="M")
            be = book_map.get((str(sym), june.year))
            dec_i = by_month.get(dec)
            beme = np.nan
            if be is not None and dec_i is not None and me[dec_i] > 0:
                beme = be / me[dec_i]
            out.append({"symbol": sym, "month": str(m), "size": size, "beme": beme,
                        "momentum": mom, "mcap": me[i]})
    return pd.DataFrame(out, columns=["symbol", "month", "size", "beme", "momentum", "mcap"])


def join_characteristics(estimates: pd.DataFrame, chars: pd.DataFrame) -> pd.DataFrame:
    """Attach each stock-day to its prior month-end characteristics."""
    df = estimates.copy()
    prior = pd.PeriodIndex(pd.to_datetime(df["date"]), freq="M") - 1
    df["month"] = prior.astype(str)
    merged = df.merge(chars, on=["symbol", "month"], how="left")
    return merged.drop(columns=["month"])
