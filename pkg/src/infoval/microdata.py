"""Trade/quote stream handling: CSV ingestion, trade signing, bar building.

Streams are column-oriented (numpy arrays inside small dataclasses).  All
operations are pure functions of their inputs, so stock-days can be processed
in parallel.
"""

from dataclasses import dataclass

import numpy as np
import pandas as pd

__all__ = [
    "Trades",
    "Quotes",
    "SignedTrades",
    "BarSeries",
    "TradeDay",
    "TapeDay",
    "sign_tick",
    "sign_quote_midpoint",
    "sign_clnv",
    "sign_trades",
    "build_bars",
    "aggregate_bars",
    "bars_from_session",
    "filter_universe",
    "with_midpoint_prices",
    "read_trades_csv",
    "read_quotes_csv",
    "read_tape_csv",
    "signing_accuracy",
    "SIGNING_ALGORITHMS",
]

TRADE_COLUMNS = ("symbol", "date", "timestamp_ns", "price", "size")
QUOTE_COLUMNS = ("symbol", "date", "timestamp_ns", "bid", "ask")
NS_PER_SECOND = 1_000_000_000


@dataclass
class Trades:
    timestamp_ns: np.ndarray
    price: np.ndarray
    size: np.ndarray

    def __post_init__(self):
        self.timestamp_ns = np.asarray(self.timestamp_ns, dtype=np.int64)
        self.price = np.asarray(self.price, dtype=float)
        self.size = np.asarray(self.size, dtype=float)

    def __len__(self) -> int:
        return self.timestamp_ns.size


@dataclass
class Quotes:
    timestamp_ns: np.ndarray
    bid: np.ndarray
    ask: np.ndarray

    def __post_init__(self):
        self.timestamp_ns = np.asarray(self.timestamp_ns, dtype=np.int64)
        self.bid = np.asarray(self.bid, dtype=float)
        self.ask = np.asarray(self.ask, dtype=float)

    def __len__(self) -> int:
        return self.timestamp_ns.size


@dataclass
class SignedTrades(Trades):
    side: np.ndarray

    def __post_init__(self):
        super().__post_init__()
        self.side = np.asarray(self.side, dtype=np.int8)


@dataclass
class TradeDay:
    """One (symbol, date) slice of a trades file; ``given_side`` is the
    optional side column when the file provides it."""

    symbol: str
    date: str
    trades: Trades
    given_side: np.ndarray | None = None


@dataclass
class TapeDay:
    """A simulator tape read back as a one-trade-per-step signed stream.

    Step n maps to timestamp (n - 1) seconds, so bars of one nominal second
    reproduce the simulation increments exactly.
    """

    signed: SignedTrades
    ref_price: float
    v: float
    n_steps: int

    @property
    def session_bounds_ns(self) -> tuple[int, int]:
        return 0, self.n_steps * NS_PER_SECOND


def _tick_state(price: np.ndarray, first_side: int) -> np.ndarray:
    """Tick-rule side per trade: +1 uptick, -1 downtick, carry on zero tick."""
    n = price.size
    if n == 0:
        return np.empty(0, dtype=np.int8)
    raw = np.empty(n, dtype=np.int8)
    raw[0] = first_side
    raw[1:] = np.sign(np.diff(price)).astype(np.int8)
    idx = np.where(raw != 0, np.arange(n), 0)
    np.maximum.accumulate(idx, out=idx)
    return raw[idx]


def sign_tick(trades: Trades, first_side: int = 1) -> SignedTrades:
    """Classic tick rule.  The first trade takes ``first_side``."""
    if first_side not in (-1, 1):
        raise ValueError("first_side must be +1 or -1")
    side = _tick_state(trades.price, first_side)
    return SignedTrades(trades.timestamp_ns, trades.price, trades.size, side)


def _prevailing(quotes: Quotes, trade_ts: np.ndarray, lag_ns: int) -> np.ndarray:
    """Index of the last quote strictly before each trade (minus lag); -1 if none."""
    return np.searchsorted(quotes.timestamp_ns, trade_ts - lag_ns, side="left") - 1


def sign_quote_midpoint(trades: Trades, quotes: Quotes, lag_ns: int = 0,
                        first_side: int = 1) -> SignedTrades:
    """Midpoint rule: above the prevailing midpoint is a buy, below a sell,
    at the midpoint (or with no prevailing quote) fall back to the tick rule."""
    tick = _tick_state(trades.price, first_side)
    qi = _prevailing(quotes, trades.timestamp_ns, lag_ns)
    side = tick.copy()
    has = qi >= 0
    if np.any(has):
        mid = 0.5 * (quotes.bid[qi[has]] + quotes.ask[qi[has]])
        px = trades.price[has]
        quoted = np.where(px > mid, 1, np.where(px < mid, -1, 0)).astype(np.int8)
        side[has] = np.where(quoted != 0, quoted, tick[has])
    return SignedTrades(trades.timestamp_ns, trades.price, trades.size, side)


def sign_clnv(trades: Trades, quotes: Quotes, lag_ns: int = 0,
              first_side: int = 1) -> SignedTrades:
    """Spread-zone rule: the top 30% of the prevailing spread is a buy, the
    bottom 30% a sell, the middle band (and zero-spread or missing quotes)
    falls back to the tick rule."""
    tick = _tick_state(trades.price, first_side)
    qi = _prevailing(quotes, trades.timestamp_ns, lag_ns)
    side = tick.copy()
    has = qi >= 0
    if np.any(has):
        bid = quotes.bid[qi[has]]
        spread = quotes.ask[qi[has]] - bid
        px = trades.price[has]
        quoted = np.zeros(px.size, dtype=np.int8)
        pos = spread > 0
        quoted[pos & (px >= bid + 0.7 * spread)] = 1
        quoted[pos & (px <= bid + 0.3 * spread)] = -1
        side[has] = np.where(quoted != 0, quoted, tick[has])
    return SignedTrades(trades.timestamp_ns, trades.price, trades.size, side)


def with_midpoint_prices(signed: "SignedTrades", quotes: Quotes,
                         lag_ns: int = 0) -> "SignedTrades":
    """Replace each trade's price by the prevailing quote midpoint (for the
    midpoint variant of the bar price); trades with no prevailing quote keep
    their transaction price."""
    qi = _prevailing(quotes, signed.timestamp_ns, lag_ns)
    px = signed.price.copy()
    has = qi >= 0
    px[has] = 0.5 * (quotes.bid[qi[has]] + quotes.ask[qi[has]])
    return SignedTrades(signed.timestamp_ns, px, signed.size, signed.side)


SIGNING_ALGORITHMS = ("tick", "quote", "clnv")


def sign_trades(trades: Trades, algorithm: str, quotes: Quotes | None = None,
                lag_ns: int = 0, first_side: int = 1) -> SignedTrades:
    """Dispatch on algorithm name.  Quote-based rules degrade to the tick rule
    trade-by-trade when no prevailing quote exists (or no quotes at all)."""
    if algorithm == "tick":
        return sign_tick(trades, first_side)
    if algorithm in ("quote", "clnv"):
        if quotes is None or len(quotes) == 0:
            return sign_tick(trades, first_side)
        fn = sign_quote_midpoint if algorithm == "quote" else sign_clnv
        return fn(trades, quotes, lag_ns, first_side)
    raise ValueError(f"unknown signing algorithm: {algorithm!r}")


@dataclass
class BarSeries:
    """Equidistant (dP, dY) increments for one stock-day.

    ``last_price`` is the bar-end price level (carried forward over empty
    bars); ``dp`` differences those levels against ``p_open``, the reference
    for the first bar.  ``p_prev_close`` is kept only for scaling.
    """

    symbol: str
    date: str
    h_seconds: float
    dp: np.ndarray
    dy: np.ndarray
    last_price: np.ndarray
    p_open: float
    p_prev_close: float

    @property
    def n_bars(self) -> int:
        return self.dp.size


def build_bars(signed: SignedTrades, h_seconds: float, session_start_ns: int,
               session_end_ns: int, *, ref_price: float | None = None,
               symbol: str = "", date: str = "",
               p_prev_close: float = float("nan")) -> BarSeries:
    """Bin signed trades into equidistant bars.

    dY is net signed size per bar; dP differences the last trade price per bar
    (carry-forward over empty bars, so those get (0, 0)).  The first bar's
    price change references ``ref_price`` when given, otherwise the session's
    first trade.  ``h_seconds`` must divide the session span; trades outside
    [start, end) are ignored.
    """
    h_ns = int(round(h_seconds * NS_PER_SECOND))
    span = int(session_end_ns) - int(session_start_ns)
    if h_ns <= 0 or span <= 0 or span % h_ns != 0:
        raise ValueError(f"bar interval {h_seconds}s does not divide the session span")
    n = span // h_ns

    ts = signed.timestamp_ns
    inside = (ts >= session_start_ns) & (ts < session_end_ns)
    ts = ts[inside]
    price = signed.price[inside]
    flow = signed.side[inside].astype(float) * signed.size[inside]

    if ts.size == 0:
        ref = float("nan") if ref_price is None else float(ref_price)
        return BarSeries(symbol, date, h_seconds, np.zeros(n), np.zeros(n),
                         np.full(n, ref), ref, p_prev_close)

    bar_idx = (ts - session_start_ns) // h_ns
    dy = np.bincount(bar_idx, weights=flow, minlength=n)

    bounds = np.searchsorted(bar_idx, np.arange(n + 1))
    nonempty = bounds[1:] > bounds[:-1]
    ref = float(price[0]) if ref_price is None else float(ref_price)
    last = np.empty(n)
    last[nonempty] = price[bounds[1:][nonempty] - 1]
    # carry the previous bar-end level over empty bars
    idx = np.where(nonempty, np.arange(n), -1)
    np.maximum.accumulate(idx, out=idx)
    filled = np.where(idx >= 0, last[np.maximum(idx, 0)], ref)
    dp = np.diff(np.concatenate(([ref], filled)))
    return BarSeries(symbol, date, h_seconds, dp, dy, filled, ref, p_prev_close)


def aggregate_bars(bars: BarSeries, k: int) -> BarSeries:
    """Merge every k consecutive bars; equivalent to rebuilding at k * h."""
    k = int(k)
    if k < 1 or bars.n_bars % k != 0:
        raise ValueError(f"aggregation factor {k} does not divide n_bars={bars.n_bars}")
    last = bars.last_price[k - 1::k]
    dp = np.diff(np.concatenate(([bars.p_open], last)))
    dy = bars.dy.reshape(-1, k).sum(axis=1)
    return BarSeries(bars.symbol, bars.date, bars.h_seconds * k, dp, dy, last,
                     bars.p_open, bars.p_prev_close)


def bars_from_session(session, symbol: str = "SIM", date: str = "sim") -> BarSeries:
    """Bar series equal to a simulated session's per-step increments."""
    prices = np.asarray(session.prices, dtype=float)
    flow = np.asarray(session.total_flow, dtype=float)
    return BarSeries(symbol, date, 1.0, np.diff(prices), np.diff(flow),
                     prices[1:].copy(), float(prices[0]), float(prices[0]))


def filter_universe(records: pd.DataFrame, min_price: float = 5.0) -> pd.DataFrame:
    """Drop stock-days whose prior close is below ``min_price`` (strict).

    ``min_price = 0`` disables the filter entirely; otherwise rows with a
    missing prior close are dropped as unpriceable.
    """
    if min_price is None or min_price == 0:
        return records
    return records[records["p_prev_close"] >= min_price]


def _structural_counter():
    count = [0]

    def handler(bad_line):  # noqa: ARG001 - pandas callback signature
        count[0] += 1
        return None

    return count, handler


def _read_csv_checked(path, required: tuple[str, ...]):
    count, handler = _structural_counter()
    df = pd.read_csv(path, dtype=str, keep_default_na=False,
                     engine="python", on_bad_lines=handler)
    missing = [c for c in required if c not in df.columns]
    if missing:
        raise ValueError(f"{path}: missing required columns {missing}")
    return df, count


def _drop_unsorted(df: pd.DataFrame) -> tuple[pd.DataFrame, int]:
    """Drop rows whose timestamp runs backwards within a (symbol, date) group."""
    ts = df["timestamp_ns"].to_numpy()
    keys = (df["symbol"].astype(str) + "\x00" + df["date"].astype(str)).to_numpy()
    keep = np.ones(len(df), dtype=bool)
    start = 0
    for i in range(1, len(df) + 1):
        if i == len(df) or keys[i] != keys[start]:
            seg = ts[start:i]
            keep[start:i] = seg >= np.maximum.accumulate(seg)
            start = i
    return df[keep], int((~keep).sum())


def read_trades_csv(path) -> tuple[list[TradeDay], int]:
    """Read a trades file (symbol,date,timestamp_ns,price,size[,side]).

    Returns one TradeDay per (symbol, date) in file order plus the count of
    malformed rows (unparseable, nonpositive price/size, bad side value, or
    out-of-order timestamps), which are skipped.
    """
    df, structural = _read_csv_checked(path, TRADE_COLUMNS)
    malformed = structural[0]
    if df.empty:
        return [], malformed

    ts = pd.to_numeric(df["timestamp_ns"], errors="coerce")
    price = pd.to_numeric(df["price"], errors="coerce")
    size = pd.to_numeric(df["size"], errors="coerce")
    ok = ts.notna() & price.notna() & size.notna() & (price > 0) & (size > 0)
    ok &= (df["symbol"].str.len() > 0) & (df["date"].str.len() > 0)
    has_side = "side" in df.columns
    if has_side:
        side = pd.to_numeric(df["side"], errors="coerce")
        ok &= side.isin([1, -1])
    malformed += int((~ok).sum())

    clean = pd.DataFrame({
        "symbol": df["symbol"][ok],
        "date": df["date"][ok],
        "timestamp_ns": ts[ok].astype(np.int64),
        "price": price[ok].astype(float),
        "size": size[ok].astype(float),
    })
    if has_side:
        clean["side"] = side[ok].astype(np.int8)
    clean, dropped = _drop_unsorted(clean)
    malformed += dropped

    days = []
    for (sym, date), g in clean.groupby(["symbol", "date"], sort=False):
        trades = Trades(g["timestamp_ns"].to_numpy(), g["price"].to_numpy(),
                        g["size"].to_numpy())
        given = g["side"].to_numpy(dtype=np.int8) if has_side else None
        days.append(TradeDay(str(sym), str(date), trades, given))
    return days, malformed


def read_quotes_csv(path) -> tuple[dict[tuple[str, str], Quotes], int]:
    """Read a quotes file (symbol,date,timestamp_ns,bid,ask); same skipping
    rules as trades, plus rows with ask < bid or nonpositive bid."""
    df, structural = _read_csv_checked(path, QUOTE_COLUMNS)
    malformed = structural[0]
    if df.empty:
        return {}, malformed

    ts = pd.to_numeric(df["timestamp_ns"], errors="coerce")
    bid = pd.to_numeric(df["bid"], errors="coerce")
    ask = pd.to_numeric(df["ask"], errors="coerce")
    ok = ts.notna() & bid.notna() & ask.notna() & (bid > 0) & (ask >= bid)
    ok &= (df["symbol"].str.len() > 0) & (df["date"].str.len() > 0)
    malformed += int((~ok).sum())

    clean = pd.DataFrame({
        "symbol": df["symbol"][ok],
        "date": df["date"][ok],
        "timestamp_ns": ts[ok].astype(np.int64),
        "bid": bid[ok].astype(float),
        "ask": ask[ok].astype(float),
    })
    clean, dropped = _drop_unsorted(clean)
    malformed += dropped

    out = {}
    for (sym, date), g in clean.groupby(["symbol", "date"], sort=False):
        out[(str(sym), str(date))] = Quotes(g["timestamp_ns"].to_numpy(),
                                            g["bid"].to_numpy(), g["ask"].to_numpy())
    return out, malformed


def read_tape_csv(path) -> TapeDay:
    """Read a simulator tape (step,t,P,dX,dZ,dY,lambda,v) as signed trades.

    Each step becomes one trade at the step's price with size |dY| and side
    sign(dY); steps with exactly zero net flow are skipped (the bar they leave
    empty carries forward).  The step-0 price is the session reference.
    """
    df = pd.read_csv(path, float_precision="round_trip")
    required = {"step", "t", "P", "dX", "dZ", "dY", "lambda", "v"}
    if not required.issubset(df.columns):
        raise ValueError(f"{path}: not a tape file (columns {sorted(df.columns)})")
    df = df.sort_values("step")
    step0 = df[df["step"] == 0]
    if step0.empty:
        raise ValueError(f"{path}: tape is missing the step-0 reference row")
    ref = float(step0["P"].iloc[0])
    v = float(step0["v"].iloc[0])
    body = df[df["step"] >= 1]
    n_steps = int(body["step"].max()) if len(body) else 0
    dy = body["dY"].to_numpy(dtype=float)
    px = body["P"].to_numpy(dtype=float)
    steps = body["step"].to_numpy(dtype=np.int64)
    nz = dy != 0
    side = np.sign(dy[nz]).astype(np.int8)
    signed = SignedTrades((steps[nz] - 1) * NS_PER_SECOND, px[nz],
                          np.abs(dy[nz]), side)
    return TapeDay(signed, ref, v, n_steps)


def signing_accuracy(assigned: np.ndarray, truth: np.ndarray) -> float:
    """Fraction of trades whose assigned side matches the true side."""
    assigned = np.asarray(assigned)
    truth = np.asarray(truth)
    if assigned.size != truth.size:
        raise ValueError("side arrays differ in length")
    if assigned.size == 0:
        return float("nan")
    return float(np.mean(assigned == truth))
