"""Risk-adjustment bounds and fee-gap arithmetic.

All public interfaces take and return percentages of market capitalization;
fractions never cross the API boundary (mixing the two is the classic silent
100x error).  The lognormal discount-factor mapping is

    cv = sigma(M) / E[M] = sqrt(exp(2 * L) - 1)

for per-year entropy L = log E[M] - E[log M], and the risk-adjusted value of
information is bounded by omega + sigma(omega) * cv.
"""

from dataclasses import dataclass
from importlib import resources

import numpy as np
import pandas as pd

__all__ = [
    "SdfSpec",
    "PuzzleInputs",
    "PuzzleReport",
    "entropy_to_cv",
    "cv_to_entropy",
    "risk_adjusted_bound",
    "concentration_value",
    "fee_gap",
    "load_fee_table",
    "fee_table_means",
    "puzzle_report",
]


@dataclass(frozen=True)
class SdfSpec:
    """Stochastic discount factor described by per-year entropy or, for the
    lognormal case, the log volatility (entropy = sigma_log_m**2 / 2)."""

    entropy: float | None = None
    sigma_log_m: float | None = None
    mean_m: float = 1.0

    def __post_init__(self):
        if self.entropy is None and self.sigma_log_m is None:
            raise ValueError("give entropy or sigma_log_m")
        if self.entropy is not None and self.entropy < 0:
            raise ValueError("entropy must be nonnegative")
        if self.sigma_log_m is not None and self.sigma_log_m < 0:
            raise ValueError("sigma_log_m must be nonnegative")
        if self.entropy is not None and self.sigma_log_m is not None:
            implied = self.sigma_log_m**2 / 2.0
            if abs(self.entropy - implied) > 1e-12 * max(1.0, self.entropy):
                raise ValueError("entropy and sigma_log_m disagree: "
                                 f"{self.entropy} vs {implied}")
        if self.mean_m > 1.0 + 1e-12:
            raise ValueError("mean_m must not exceed 1")

    @property
    def resolved_entropy(self) -> float:
        if self.entropy is not None:
            return float(self.entropy)
        return float(self.sigma_log_m**2 / 2.0)


@dataclass(frozen=True)
class PuzzleInputs:
    """Calibration constants, all in percent of market cap or plain ratios."""

    omega_pct: float
    sigma_omega_pct: float
    fee_active: float
    fee_passive: float = 0.0
    earnings_multiplier: float = 1.0
    earnings_day_fraction: float = 1.0

    def __post_init__(self):
        for name in ("omega_pct", "sigma_omega_pct", "fee_active", "fee_passive",
                     "earnings_multiplier", "earnings_day_fraction"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")
        if self.earnings_day_fraction > 1.0:
            raise ValueError("earnings_day_fraction must not exceed 1")


def entropy_to_cv(entropy: float) -> float:
    """Coefficient of variation of a lognormal discount factor with the given
    per-year entropy: sqrt(exp(2 * entropy) - 1)."""
    if entropy < 0:
        raise ValueError("entropy must be nonnegative")
    return float(np.sqrt(np.expm1(2.0 * entropy)))


def cv_to_entropy(cv: float) -> float:
    """Inverse mapping: entropy = log(1 + cv**2) / 2."""
    if cv < 0:
        raise ValueError("cv must be nonnegative")
    return float(0.5 * np.log1p(cv * cv))


def risk_adjusted_bound(omega_pct: float, sigma_omega_pct: float, entropy: float) -> float:
    """Upper bound on the risk-adjusted value of information, in percent of
    market cap: omega + sigma(omega) * cv(entropy)."""
    if omega_pct < 0 or sigma_omega_pct < 0:
        raise ValueError("inputs must be nonnegative")
    return float(omega_pct + sigma_omega_pct * entropy_to_cv(entropy))


def concentration_value(base_pct: float, multiplier: float, fraction_days: float) -> float:
    """Value captured by being active only on high-value days: base level
    times the event-day multiplier times the fraction of days covered."""
    if base_pct < 0 or multiplier < 0 or fraction_days < 0:
        raise ValueError("inputs must be nonnegative")
    if fraction_days > 1.0:
        raise ValueError("fraction_days must not exceed 1")
    return float(base_pct * multiplier * fraction_days)


def fee_gap(fee_active: float, fee_passive: float) -> float:
    """Active-minus-passive expense ratio, percentage points."""
    if fee_active < 0 or fee_passive < 0:
        raise ValueError("fees must be nonnegative")
    return float(fee_active - fee_passive)


def load_fee_table() -> pd.DataFrame:
    """Packaged active-vs-passive equity fund expense ratios (% of AUM)."""
    with resources.files("infoval").joinpath("data/fee_table.csv").open("rb") as fh:
        return pd.read_csv(fh)


def fee_table_means() -> pd.DataFrame:
    """Per-source means of the packaged fee table."""
    table = load_fee_table()
    return table.groupby("source", sort=False)[["active", "passive", "diff"]].mean()


@dataclass
class PuzzleReport:
    omega_pct: float
    sigma_omega_pct: float
    entropy: float
    cv: float
    risk_bound_pct: float
    fee_active: float
    fee_passive: float
    fee_gap_pct: float
    earnings_multiplier: float
    earnings_day_fraction: float
    concentration_all_days_pct: float
    concentration_selective_pct: float
    bound_below_fees: bool
    gap_factor: float

    def to_dict(self) -> dict:
        return {k: (bool(v) if isinstance(v, (bool, np.bool_)) else float(v))
                for k, v in self.__dict__.items()}

    def to_frame(self) -> pd.DataFrame:
        d = self.to_dict()
        return pd.DataFrame({"quantity": list(d.keys()), "value": list(d.values())})

    def to_text(self) -> str:
        verdict = ("puzzle: bound %.2f < fees %.2f" % (self.risk_bound_pct, self.fee_gap_pct)
                   if self.bound_below_fees else
                   "no puzzle: bound %.2f >= fees %.2f" % (self.risk_bound_pct, self.fee_gap_pct))
        lines = [
            "value of information              %8.4f %% of mcap / year" % self.omega_pct,
            "dispersion of the value           %8.4f %% of mcap / year" % self.sigma_omega_pct,
            "discount-factor entropy           %8.4f per year (cv %.4f)" % (self.entropy, self.cv),
            "risk-adjusted upper bound         %8.4f %% of mcap / year" % self.risk_bound_pct,
            "event-day level (all days)        %8.4f %% of mcap / year" % self.concentration_all_days_pct,
            "event-day level (selective)       %8.4f %% of mcap / year" % self.concentration_selective_pct,
            "active fees                       %8.4f %% of mcap / year" % self.fee_active,
            "passive fees                      %8.4f %% of mcap / year" % self.fee_passive,
            "active - passive gap              %8.4f %% of mcap / year" % self.fee_gap_pct,
            "fees-to-bound factor              %8.2f" % self.gap_factor,
            verdict,
        ]
        return "\n".join(lines)


def puzzle_report(inputs: PuzzleInputs, sdf: SdfSpec) -> PuzzleReport:
    """Assemble the full comparison: risk-adjusted bound, concentration
    strategies, fee gap, and the puzzle verdict (bound below fees)."""
    entropy = sdf.resolved_entropy
    cv = entropy_to_cv(entropy)
    bound = risk_adjusted_bound(inputs.omega_pct, inputs.sigma_omega_pct, entropy)
    gap = fee_gap(inputs.fee_active, inputs.fee_passive)
    all_days = concentration_value(inputs.omega_pct, inputs.earnings_multiplier, 1.0)
    selective = concentration_value(inputs.omega_pct, inputs.earnings_multiplier,
                                    inputs.earnings_day_fraction)
    return PuzzleReport(
        omega_pct=inputs.omega_pct,
        sigma_omega_pct=inputs.sigma_omega_pct,
        entropy=entropy,
        cv=cv,
        risk_bound_pct=bound,
        fee_active=inputs.fee_active,
        fee_passive=inputs.fee_passive,
        fee_gap_pct=gap,
        earnings_multiplier=inputs.earnings_multiplier,
        earnings_day_fraction=inputs.earnings_day_fraction,
        concentration_all_days_pct=all_days,
        concentration_selective_pct=selective,
        bound_below_fees=bool(bound < gap),
        gap_factor=float(gap / bound) if bound > 0 else float("inf"),
    )
