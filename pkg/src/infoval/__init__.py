"""infoval: measure what private information is worth in a securities market.

The package simulates strategic-trading sessions with a known ground-truth
information value, estimates that value from tick-level prices and signed
order flow via the price-change/flow covariation and its impact-times-flow-
variance decomposition, aggregates stock-day estimates into panels, and runs
the risk-adjustment and fee-gap arithmetic that turns the estimates into an
economic comparison.
"""

from .simulation import (
    SimParams,
    SimSession,
    SessionBatch,
    LeakageDecomposition,
    simulate_kyle,
    simulate_batch,
    leakage_decomposition,
    frequency_sweep,
    sdf_adjusted_omega,
    iid_lognormal_sdf,
    martingale_lognormal_sdf,
    summarize_paths,
    oracle_report,
    write_tape,
)
from .microdata import (
    Trades,
    Quotes,
    SignedTrades,
    BarSeries,
    sign_tick,
    sign_quote_midpoint,
    sign_clnv,
    sign_trades,
    build_bars,
    aggregate_bars,
    bars_from_session,
    filter_universe,
    with_midpoint_prices,
    read_trades_csv,
    read_quotes_csv,
    read_tape_csv,
)
from .estimators import (
    ScalingConstants,
    StockDayEstimate,
    omega_hat,
    lambda_hat,
    sigma_y2_hat,
    omega_product,
    log_decomposition,
    winsorize,
    deflate,
    estimate_stock_day,
    estimates_to_frame,
)
from .panel import (
    RegressionResult,
    EventStudyResult,
    load_panel,
    attach_log_columns,
    winsorize_panel,
    aggregate_pct_mcap,
    designate_earnings_day,
    earnings_event_study,
    fe_regression,
    characteristics,
    join_characteristics,
)
from .bounds import (
    SdfSpec,
    PuzzleInputs,
    PuzzleReport,
    entropy_to_cv,
    cv_to_entropy,
    risk_adjusted_bound,
    concentration_value,
    fee_gap,
    load_fee_table,
    fee_table_means,
    puzzle_report,
)

__version__ = "0.1.0"
