"""Batch-auction market simulator with strategic informed flow.

A session covers ``horizon`` years split into ``n_steps`` auctions.  Per step
the informed trader works off the remaining mispricing, noise demand is
Brownian, and the market maker prices net flow linearly plus an orthogonal
public-information shock:

    dZ_n = sigma_z(t) * sqrt(dt) * xi_n
    dX_n = (v - P_{n-1}) * dt / (lam_n * (horizon - t)),  capped so that
           |lam_n * dX_n| <= |v - P_{n-1}|
    dP_n = lam_n * (dX_n + dZ_n) + sigma_w * sqrt(dt) * eta_n

with lam_n = sigma_v / sigma_z(t) unless overridden.  The terminal value is
drawn as v ~ Normal(p0, sigma_v**2 * horizon), which makes the expected
noise-trader slippage sum(dP * dZ) equal sigma_v * sigma_z * horizon for
constant sigma_z.

Every path draws from its own generator seeded with ``(seed, path_index)``,
so identical parameters reproduce identical sessions under any execution
schedule.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "SimParams",
    "SimSession",
    "SessionBatch",
    "LeakageDecomposition",
    "PathSummaries",
    "simulate_kyle",
    "simulate_batch",
    "leakage_decomposition",
    "frequency_sweep",
    "sdf_adjusted_omega",
    "iid_lognormal_sdf",
    "martingale_lognormal_sdf",
    "summarize_paths",
    "oracle_report",
    "write_tape",
]

DEFAULT_CHUNK = 4096


@dataclass(frozen=True)
class SimParams:
    """Session parameters.  Volatilities are per sqrt(year), horizon in years.

    ``sigma_z`` may be a deterministic function of time (evaluated at step
    starts); stochastic noise volatility is not supported.  ``informed=False``
    switches the strategic trader off, and ``lambda_override`` fixes the
    price-impact coefficient instead of sigma_v / sigma_z.
    """

    sigma_v: float
    sigma_z: float | Callable[[float], float] = 1.0
    sigma_w: float = 0.0
    p0: float = 0.0
    horizon: float = 1.0
    n_steps: int = 390
    n_paths: int = 1
    seed: int = 0
    informed: bool = True
    lambda_override: float | None = None

    def __post_init__(self):
        if not self.sigma_v > 0:
            raise ValueError(f"sigma_v must be positive, got {self.sigma_v}")
        if not callable(self.sigma_z) and not self.sigma_z > 0:
            raise ValueError(f"sigma_z must be positive, got {self.sigma_z}")
        if self.sigma_w < 0:
            raise ValueError(f"sigma_w must be nonnegative, got {self.sigma_w}")
        if not self.horizon > 0:
            raise ValueError(f"horizon must be positive, got {self.horizon}")
        if self.n_steps < 2:
            raise ValueError(f"n_steps must be at least 2, got {self.n_steps}")
        if self.n_paths < 1:
            raise ValueError(f"n_paths must be at least 1, got {self.n_paths}")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must fit in an unsigned 64-bit integer")
        if self.lambda_override is not None and not self.lambda_override > 0:
            raise ValueError("lambda_override must be positive when given")

    @property
    def dt(self) -> float:
        return self.horizon / self.n_steps

    def sigma_z_grid(self) -> np.ndarray:
        """Noise volatility at each step start t_0 .. t_{N-1}."""
        if callable(self.sigma_z):
            t = np.arange(self.n_steps) * self.dt
            grid = np.asarray([float(self.sigma_z(tk)) for tk in t], dtype=float)
            if not np.all(grid > 0):
                raise ValueError("sigma_z(t) must be positive on the step grid")
            return grid
        return np.full(self.n_steps, float(self.sigma_z))

    def lambda_grid(self) -> np.ndarray:
        """Per-step price-impact coefficients."""
        if self.lambda_override is not None:
            return np.full(self.n_steps, float(self.lambda_override))
        return self.sigma_v / self.sigma_z_grid()


@dataclass(frozen=True)
class SimSession:
    """One simulated session: terminal value and the four paths (length N+1)."""

    v: float
    prices: np.ndarray
    informed_flow: np.ndarray
    noise_flow: np.ndarray
    total_flow: np.ndarray
    price_impact: np.ndarray  # per step, length N
    dt: float

    @property
    def n_steps(self) -> int:
        return self.prices.size - 1


@dataclass(frozen=True)
class SessionBatch:
    """Stacked sessions; arrays are (n_paths, N+1), price_impact is (N,)."""

    v: np.ndarray
    prices: np.ndarray
    informed_flow: np.ndarray
    noise_flow: np.ndarray
    total_flow: np.ndarray
    price_impact: np.ndarray
    dt: float
    path_indices: np.ndarray

    def __len__(self) -> int:
        return self.v.size

    @property
    def n_steps(self) -> int:
        return self.prices.shape[1] - 1

    def session(self, i: int) -> SimSession:
        return SimSession(
            v=float(self.v[i]),
            prices=self.prices[i],
            informed_flow=self.informed_flow[i],
            noise_flow=self.noise_flow[i],
            total_flow=self.total_flow[i],
            price_impact=self.price_impact,
            dt=self.dt,
        )


@dataclass(frozen=True)
class LeakageDecomposition:
    """Per-path sums splitting the flow covariation into its components.

    ``omega_flow - leakage`` equals ``noise_loss`` up to float rounding, and
    ``informed_profit + noise_pnl + mm_profit`` nets to zero: every order
    executes at the post-impact price and the market maker is the counterparty
    to all of it.  ``noise_loss`` is the slippage view of noise-trader losses;
    ``noise_pnl`` is their mark-to-terminal-value P&L.
    """

    omega_flow: float      # sum dP * dY
    leakage: float         # sum dP * dX
    noise_loss: float      # sum dP * dZ
    informed_profit: float  # sum (v - P_n) * dX
    noise_pnl: float       # sum (v - P_n) * dZ
    mm_profit: float       # sum (P_n - v) * dY


def _path_normals(seed: int, path_index: int, n_steps: int, with_sdf: bool):
    """Draws for one path, in a fixed order: v, noise shocks, public shocks,
    then (optionally) SDF shocks.  The stream depends only on (seed, index)."""
    rng = np.random.default_rng([int(seed), int(path_index)])
    zv = rng.standard_normal()
    xi = rng.standard_normal(n_steps)
    eta = rng.standard_normal(n_steps)
    zeta = rng.standard_normal(n_steps) if with_sdf else None
    return zv, xi, eta, zeta


def _simulate_block(params: SimParams, path_indices: np.ndarray, with_sdf: bool = False):
    """Simulate a block of paths; returns (SessionBatch, sdf_normals | None)."""
    n = params.n_steps
    m = len(path_indices)
    dt = params.dt
    sqdt = np.sqrt(dt)
    sz = params.sigma_z_grid()
    lam = params.lambda_grid()

    zv = np.empty(m)
    xi = np.empty((m, n))
    eta = np.empty((m, n))
    zeta = np.empty((m, n)) if with_sdf else None
    for i, pidx in enumerate(path_indices):
        zv[i], xi[i], eta[i], z = _path_normals(params.seed, pidx, n, with_sdf)
        if with_sdf:
            zeta[i] = z

    v = params.p0 + params.sigma_v * np.sqrt(params.horizon) * zv

    prices = np.empty((m, n + 1))
    inf_flow = np.empty((m, n + 1))
    noise = np.empty((m, n + 1))
    prices[:, 0] = params.p0
    inf_flow[:, 0] = 0.0
    noise[:, 0] = 0.0

    w_scale = params.sigma_w * sqdt
    zeros = np.zeros(m)
    for k in range(n):
        t = k * dt
        dz = (sz[k] * sqdt) * xi[:, k]
        if params.informed:
            gap = v - prices[:, k]
            dx = gap * (dt / (lam[k] * (params.horizon - t)))
            limit = np.abs(gap) / lam[k]
            dx = np.clip(dx, -limit, limit)
        else:
            dx = zeros
        dy = dx + dz
        prices[:, k + 1] = prices[:, k] + (lam[k] * dy + w_scale * eta[:, k])
        inf_flow[:, k + 1] = inf_flow[:, k] + dx
        noise[:, k + 1] = noise[:, k] + dz

    batch = SessionBatch(
        v=v,
        prices=prices,
        informed_flow=inf_flow,
        noise_flow=noise,
        total_flow=inf_flow + noise,
        price_impact=lam,
        dt=dt,
        path_indices=np.asarray(path_indices, dtype=np.int64),
    )
    return batch, zeta


def simulate_batch(params: SimParams, path_indices: Sequence[int] | None = None) -> SessionBatch:
    """Simulate the given paths (default: all ``n_paths``) in one batch."""
    if path_indices is None:
        path_indices = np.arange(params.n_paths)
    path_indices = np.asarray(path_indices, dtype=np.int64)
    if np.any(path_indices < 0) or np.any(path_indices >= params.n_paths):
        raise ValueError("path index out of range")
    batch, _ = _simulate_block(params, path_indices)
    return batch


def simulate_kyle(params: SimParams, path_index: int = 0) -> SimSession:
    """Simulate a single session for ``path_index``."""
    return simulate_batch(params, [path_index]).session(0)


def leakage_decomposition(session: SimSession) -> LeakageDecomposition:
    """Split the session's flow covariation and report all P&L views."""
    p, x, z, y = session.prices, session.informed_flow, session.noise_flow, session.total_flow
    if not (p.shape == x.shape == z.shape == y.shape):
        raise ValueError("session paths have inconsistent lengths")
    dp = np.diff(p)
    dx = np.diff(x)
    dz = np.diff(z)
    dy = np.diff(y)
    gain = session.v - p[1:]
    return LeakageDecomposition(
        omega_flow=float(np.sum(dp * dy)),
        leakage=float(np.sum(dp * dx)),
        noise_loss=float(np.sum(dp * dz)),
        informed_profit=float(np.sum(gain * dx)),
        noise_pnl=float(np.sum(gain * dz)),
        mm_profit=float(np.sum(-gain * dy)),
    )


def frequency_sweep(session: SimSession, multiples: Sequence[int]) -> list[tuple[int, float]]:
    """Re-aggregate the path to coarser bars and recompute sum(dP * dY).

    Each multiple must divide ``n_steps``; coarse increments difference the
    stored levels directly, so ``multiple=1`` reproduces ``omega_flow``
    bit-for-bit.
    """
    n = session.n_steps
    out = []
    for k in multiples:
        k = int(k)
        if k < 1 or n % k != 0:
            raise ValueError(f"interval multiple {k} does not divide n_steps={n}")
        dp = np.diff(session.prices[::k])
        dy = np.diff(session.total_flow[::k])
        out.append((k, float(np.sum(dp * dy))))
    return out


def sdf_adjusted_omega(session: SimSession, sdf_path: np.ndarray) -> tuple[float, float]:
    """Discounted noise-trader slippage for one path.

    Returns ``(omega_m, omega_flow)`` where ``omega_m = sum(M_n dP_n dZ_n)``.
    The second element is the path's contribution to the bound right-hand
    side; the covariance correction is an across-path statistic and is added
    by the Monte Carlo aggregator (see ``summarize_paths``).
    """
    sdf_path = np.asarray(sdf_path, dtype=float)
    if sdf_path.shape != (session.n_steps,):
        raise ValueError("sdf_path must have one entry per step")
    if not np.all(sdf_path > 0):
        raise ValueError("discount factors must be positive")
    dp = np.diff(session.prices)
    dz = np.diff(session.noise_flow)
    dy = np.diff(session.total_flow)
    return float(np.sum(sdf_path * dp * dz)), float(np.sum(dp * dy))


def iid_lognormal_sdf(n_steps: int, sigma_log: float, rng: np.random.Generator) -> np.ndarray:
    """Per-step i.i.d. lognormal discount factors with unit mean."""
    z = rng.standard_normal(n_steps)
    return np.exp(sigma_log * z - 0.5 * sigma_log**2)


def martingale_lognormal_sdf(entropy: float, dt: float, n_steps: int,
                             rng_or_normals) -> np.ndarray:
    """Lognormal martingale discount path with the given per-year entropy.

    M_t = exp(s * B_t - s^2 t / 2) with s = sqrt(2 * entropy), so E[M_t] = 1
    and log E[M_t] - E[log M_t] = entropy * t.
    """
    if entropy < 0:
        raise ValueError("entropy must be nonnegative")
    if isinstance(rng_or_normals, np.random.Generator):
        z = rng_or_normals.standard_normal(n_steps)
    else:
        z = np.asarray(rng_or_normals, dtype=float)
    s = np.sqrt(2.0 * entropy)
    bm = np.cumsum(np.sqrt(dt) * z)
    t = np.arange(1, n_steps + 1) * dt
    return np.exp(s * bm - 0.5 * s**2 * t)


@dataclass
class PathSummaries:
    """Per-path reductions over a Monte Carlo run, in path order."""

    params: SimParams
    noise_loss: np.ndarray
    omega_flow: np.ndarray
    leakage: np.ndarray
    informed_profit: np.ndarray
    noise_pnl: np.ndarray
    mm_profit: np.ndarray
    terminal_gap: np.ndarray          # |P_N - v|
    corr_flow_price: np.ndarray       # per-path corr(dP, dY)
    max_identity_err: float           # max rel. |omega_flow - leakage - noise_loss|
    sweep_omega: dict[int, np.ndarray]
    sdf_omega: np.ndarray | None = None
    sdf_cov_term: float | None = None  # sum_n Cov_paths(M_n, dP_n dY_n)

    @property
    def n_paths(self) -> int:
        return self.noise_loss.size

    def sdf_bound_check(self) -> dict:
        """Monte Carlo check that mean discounted losses sit under the bound.

        Bound RHS = mean sum(dP dY) + sum_n Cov_paths(M_n, dP_n dY_n); the
        standard error is that of the paired difference omega_m - omega_flow.
        """
        if self.sdf_omega is None:
            raise ValueError("run summarize_paths with sdf_entropy set")
        lhs = float(np.mean(self.sdf_omega))
        rhs = float(np.mean(self.omega_flow)) + float(self.sdf_cov_term)
        diff = self.sdf_omega - self.omega_flow
        se = float(np.std(diff, ddof=1) / np.sqrt(diff.size))
        return {
            "omega_m_mean": lhs,
            "bound_rhs": rhs,
            "se": se,
            "satisfied": bool(lhs <= rhs + 3.0 * se),
        }


def _row_corr(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    am = a - a.mean(axis=1, keepdims=True)
    bm = b - b.mean(axis=1, keepdims=True)
    num = np.sum(am * bm, axis=1)
    den = np.sqrt(np.sum(am * am, axis=1) * np.sum(bm * bm, axis=1))
    out = np.full(a.shape[0], np.nan)
    np.divide(num, den, out=out, where=den > 0)
    return out


def summarize_paths(params: SimParams, *, multiples: Sequence[int] = (),
                    sdf_entropy: float | None = None,
                    chunk_size: int = DEFAULT_CHUNK,
                    threads: int = 1) -> PathSummaries:
    """Run the full Monte Carlo and reduce each path to scalar diagnostics.

    Chunks are fixed by ``chunk_size`` and combined in path order, so the
    result is byte-identical for any ``threads`` value.
    """
    n = params.n_steps
    for k in multiples:
        if n % int(k) != 0:
            raise ValueError(f"interval multiple {k} does not divide n_steps={n}")
    starts = list(range(0, params.n_paths, chunk_size))
    chunks = [np.arange(s, min(s + chunk_size, params.n_paths)) for s in starts]
    with_sdf = sdf_entropy is not None

    def work(idx: np.ndarray) -> dict:
        batch, zeta = _simulate_block(params, idx, with_sdf=with_sdf)
        dp = np.diff(batch.prices, axis=1)
        dx = np.diff(batch.informed_flow, axis=1)
        dz = np.diff(batch.noise_flow, axis=1)
        dy = np.diff(batch.total_flow, axis=1)
        gain = batch.v[:, None] - batch.prices[:, 1:]
        omega_flow = np.sum(dp * dy, axis=1)
        leak = np.sum(dp * dx, axis=1)
        noise_loss = np.sum(dp * dz, axis=1)
        scale = np.maximum.reduce([np.abs(omega_flow), np.abs(leak),
                                   np.abs(noise_loss), np.full(len(idx), 1e-300)])
        ident = np.max(np.abs(omega_flow - leak - noise_loss) / scale)
        out = {
            "noise_loss": noise_loss,
            "omega_flow": omega_flow,
            "leakage": leak,
            "informed_profit": np.sum(gain * dx, axis=1),
            "noise_pnl": np.sum(gain * dz, axis=1),
            "mm_profit": np.sum(-gain * dy, axis=1),
            "terminal_gap": np.abs(batch.prices[:, -1] - batch.v),
            "corr": _row_corr(dp, dy),
            "ident": float(ident),
            "sweep": {},
        }
        for k in multiples:
            k = int(k)
            dpc = np.diff(batch.prices[:, ::k], axis=1)
            dyc = np.diff(batch.total_flow[:, ::k], axis=1)
            out["sweep"][k] = np.sum(dpc * dyc, axis=1)
        if with_sdf:
            s = np.sqrt(2.0 * sdf_entropy)
            t = np.arange(1, n + 1) * batch.dt
            bm = np.cumsum(np.sqrt(batch.dt) * zeta, axis=1)
            m = np.exp(s * bm - 0.5 * s**2 * t[None, :])
            q = dp * dy
            out["sdf_omega"] = np.sum(m * dp * dz, axis=1)
            out["acc_m"] = m.sum(axis=0)
            out["acc_q"] = q.sum(axis=0)
            out["acc_mq"] = np.sum(m * q, axis=0)
        return out

    if threads > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(work, chunks))
    else:
        results = [work(c) for c in chunks]

    def cat(key):
        return np.concatenate([r[key] for r in results])

    sweep = {int(k): np.concatenate([r["sweep"][int(k)] for r in results]) for k in multiples}
    sdf_omega = None
    cov_term = None
    if with_sdf:
        sdf_omega = cat("sdf_omega")
        total = float(params.n_paths)
        acc_m = sum(r["acc_m"] for r in results)
        acc_q = sum(r["acc_q"] for r in results)
        acc_mq = sum(r["acc_mq"] for r in results)
        cov_term = float(np.sum(acc_mq / total - (acc_m / total) * (acc_q / total)))

    return PathSummaries(
        params=params,
        noise_loss=cat("noise_loss"),
        omega_flow=cat("omega_flow"),
        leakage=cat("leakage"),
        informed_profit=cat("informed_profit"),
        noise_pnl=cat("noise_pnl"),
        mm_profit=cat("mm_profit"),
        terminal_gap=cat("terminal_gap"),
        corr_flow_price=cat("corr"),
        max_identity_err=max(r["ident"] for r in results),
        sweep_omega=sweep,
        sdf_omega=sdf_omega,
        sdf_cov_term=cov_term,
    )


def _mean_se(x: np.ndarray) -> tuple[float, float]:
    return float(np.mean(x)), float(np.std(x, ddof=1) / np.sqrt(x.size))


def oracle_report(stats: PathSummaries) -> dict:
    """Summary statistics plus pass/fail gates for a Monte Carlo run.

    The closed-form target sigma_v * sigma_z * horizon applies only for
    constant noise volatility without an impact override; otherwise the
    z-score is omitted and the oracle gate is skipped.
    """
    p = stats.params
    mean_loss, se_loss = _mean_se(stats.noise_loss)
    mean_mm, se_mm = _mean_se(stats.mm_profit)
    mm_t = mean_mm / se_mm if se_mm > 0 else 0.0
    report = {
        "n_paths": int(stats.n_paths),
        "n_steps": int(p.n_steps),
        "seed": int(p.seed),
        "mean_noise_loss": mean_loss,
        "se_noise_loss": se_loss,
        "mean_omega_flow": float(np.mean(stats.omega_flow)),
        "mean_leakage": float(np.mean(stats.leakage)),
        "mm_profit_mean": mean_mm,
        "mm_profit_tstat": mm_t,
        "mean_corr_flow_price": float(np.nanmean(stats.corr_flow_price)),
        "max_identity_rel_err": stats.max_identity_err,
    }
    checks = {
        "identity": stats.max_identity_err <= 1e-10,
        "mm_zero_profit": abs(mm_t) < 3.0,
    }
    if not callable(p.sigma_z) and p.lambda_override is None and p.informed:
        oracle = p.sigma_v * p.sigma_z * p.horizon
        z = (mean_loss - oracle) / se_loss if se_loss > 0 else 0.0
        report["oracle_value"] = oracle
        report["z_vs_oracle"] = z
        checks["oracle"] = abs(z) < 3.0
    report["checks"] = checks
    report["ok"] = all(checks.values())
    return report


def write_tape(session: SimSession, path) -> None:
    """Write one session as CSV with columns step,t,P,dX,dZ,dY,lambda,v.

    Row 0 carries the initial state (zero increments, first-step impact) so a
    consumer can recover the opening price.  Floats use %.17g and round-trip
    exactly.
    """
    n = session.n_steps
    lam = session.price_impact
    dx = np.diff(session.informed_flow)
    dz = np.diff(session.noise_flow)
    dy = np.diff(session.total_flow)
    with open(path, "w", newline="") as fh:
        fh.write("step,t,P,dX,dZ,dY,lambda,v\n")
        fmt = "%d,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n"
        fh.write(fmt % (0, 0.0, session.prices[0], 0.0, 0.0, 0.0, lam[0], session.v))
        for k in range(1, n + 1):
            fh.write(fmt % (k, k * session.dt, session.prices[k],
                            dx[k - 1], dz[k - 1], dy[k - 1], lam[k - 1], session.v))
