"""Mean-variance portfolio application on intraday price data.

Pipeline per rolling test day: estimate daily variance from the trailing
window by bipower variation, optionally zero out increments beyond the jump
threshold tau = 4 sigma dt^0.47, fit the allocation parameter theta with
mstde or msbve gradient steps on wealth paths replayed from the window's
days, then trade the next day with the policy

    a_i = -(theta / sigma_hat) (X_i - w(theta))

and record the terminal wealth. Daily excess returns are summarized by the
annualized Sharpe ratio.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from datetime import datetime, timezone
from functools import cached_property
from typing import Optional

import numpy as np

from .errors import (ConfigurationError, DegenerateSeriesError, DivergenceError,
                     IngestionError, InsufficientDataError)
from .estimators import TrainConfig, grads_by_row
from .models import MeanVarianceValue, target_anchor
from .rng import stream

THRESHOLD_MODES = ("raw", "thresholded")


@dataclass(frozen=True)
class PriceSeries:
    """Strictly ascending intraday prices with a nominal bar count per day."""

    timestamps: np.ndarray  # datetime64[s], strictly ascending
    prices: np.ndarray      # positive floats, same length
    bars_per_day: int

    def __post_init__(self):
        if self.timestamps.shape != self.prices.shape or self.timestamps.ndim != 1:
            raise IngestionError("timestamps and prices must be equal-length 1-D arrays")
        if self.timestamps.size < 2:
            raise IngestionError("price series needs at least 2 rows")
        if not (np.diff(self.timestamps.astype("int64")) > 0).all():
            raise IngestionError("timestamps must be strictly ascending without duplicates")
        if not (self.prices > 0).all():
            raise IngestionError("prices must be positive")
        if self.bars_per_day < 1:
            raise IngestionError("bars_per_day must be >= 1")
        self.timestamps.setflags(write=False)
        self.prices.setflags(write=False)

    @cached_property
    def day_partition(self) -> list[tuple[str, slice]]:
        """Calendar-date label and row slice per day, in order."""
        dates = self.timestamps.astype("datetime64[D]")
        uniq, starts = np.unique(dates, return_index=True)
        order = np.argsort(starts)
        out = []
        bounds = list(starts[order]) + [self.timestamps.size]
        for i, date in enumerate(uniq[order]):
            out.append((str(date), slice(bounds[i], bounds[i + 1])))
        return out

    def day_prices(self) -> list[tuple[str, np.ndarray]]:
        return [(date, self.prices[sl]) for date, sl in self.day_partition]

    def sub_series(self, row_lo: int, row_hi: int) -> "PriceSeries":
        return PriceSeries(self.timestamps[row_lo:row_hi].copy(),
                           self.prices[row_lo:row_hi].copy(), self.bars_per_day)


def _parse_timestamp(text: str) -> int:
    """Seconds since epoch from ISO-8601 (tz-aware or naive) or epoch seconds."""
    s = text.strip()
    try:
        return int(round(float(s)))
    except ValueError:
        pass
    try:
        parsed = datetime.fromisoformat(s.replace("Z", "+00:00"))
    except ValueError as exc:
        raise IngestionError(f"unparseable timestamp {text!r}") from exc
    if parsed.tzinfo is None:
        parsed = parsed.replace(tzinfo=timezone.utc)
    return int(parsed.timestamp())


def build_price_series(timestamps: np.ndarray, prices: np.ndarray,
                       bars_per_day: int) -> PriceSeries:
    """Apply the day-completeness ingestion rule and construct the series.

    Days with fewer than bars_per_day rows are dropped with a warning; days
    with more than bars_per_day + 1 rows are rejected.
    """
    raw = PriceSeries(np.asarray(timestamps), np.asarray(prices, dtype=float),
                      bars_per_day)
    keep = []
    dropped = []
    for date, sl in raw.day_partition:
        count = sl.stop - sl.start
        if count > bars_per_day + 1:
            raise IngestionError(
                f"day {date} has {count} rows; at most bars_per_day + 1 = "
                f"{bars_per_day + 1} allowed")
        if count < bars_per_day:
            dropped.append((date, count))
        else:
            keep.append(sl)
    if dropped:
        warnings.warn(f"dropped {len(dropped)} incomplete day(s): {dropped[:5]}"
                      f"{'...' if len(dropped) > 5 else ''}")
    if not keep:
        raise IngestionError("no complete trading days after ingestion rule")
    rows = np.concatenate([np.arange(sl.start, sl.stop) for sl in keep])
    return PriceSeries(raw.timestamps[rows], raw.prices[rows], bars_per_day)


def read_price_csv(path, bars_per_day: int) -> PriceSeries:
    """Load `timestamp,price` CSV (ISO-8601 or epoch-second timestamps)."""
    stamps = []
    values = []
    with open(path) as fh:
        header = fh.readline().strip().lower()
        if header.replace(" ", "") != "timestamp,price":
            raise IngestionError(f"expected header 'timestamp,price', got {header!r}")
        for lineno, line in enumerate(fh, start=2):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != 2:
                raise IngestionError(f"line {lineno}: expected 2 fields, got {len(parts)}")
            stamps.append(_parse_timestamp(parts[0]))
            try:
                values.append(float(parts[1]))
            except ValueError as exc:
                raise IngestionError(f"line {lineno}: bad price {parts[1]!r}") from exc
    timestamps = np.asarray(stamps, dtype="int64").astype("datetime64[s]")
    return build_price_series(timestamps, np.asarray(values), bars_per_day)


def write_price_csv(series: PriceSeries, path) -> None:
    lines = ["timestamp,price"]
    epoch = series.timestamps.astype("int64")
    for ts, p in zip(epoch, series.prices):
        lines.append(f"{ts},{p:.17g}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def bipower_sigma2(increments) -> float:
    """(pi/2) sum of adjacent absolute-increment products."""
    inc = np.asarray(increments, dtype=float)
    if inc.ndim != 1 or inc.size < 2:
        raise InsufficientDataError(f"bipower needs >= 2 increments, got {inc.size}")
    a = np.abs(inc)
    return float(math.pi / 2.0 * np.dot(a[1:], a[:-1]))


def jump_threshold(sigma_hat: float, dt: float) -> float:
    """tau = 4 sigma_hat dt^0.47."""
    if sigma_hat < 0:
        raise ConfigurationError(f"sigma_hat must be >= 0, got {sigma_hat}")
    if not dt > 0:
        raise ConfigurationError(f"dt must be > 0, got {dt}")
    return 4.0 * sigma_hat * dt ** 0.47


def threshold_series(series: PriceSeries, tau: float) -> PriceSeries:
    """Zero all increments with |dS| >= tau and rebuild from the first price."""
    if tau < 0:
        raise ConfigurationError(f"tau must be >= 0, got {tau}")
    inc = np.diff(series.prices)
    kept = np.where(np.abs(inc) < tau, inc, 0.0)
    out = np.empty_like(series.prices)
    out[0] = series.prices[0]
    np.cumsum(kept, out=out[1:])
    out[1:] += series.prices[0]
    return PriceSeries(series.timestamps.copy(), out, series.bars_per_day)


def w_of(theta: float, z: float, x0: float, horizon: float) -> float:
    """Target anchor w(theta) of the mean-variance policy."""
    return target_anchor(theta, z, x0, horizon)


def sharpe(returns, periods_per_year: float) -> float:
    """mean / std(ddof=1) scaled by sqrt(periods_per_year)."""
    r = np.asarray(returns, dtype=float)
    if r.size < 2:
        raise InsufficientDataError(f"sharpe needs >= 2 returns, got {r.size}")
    std = float(np.std(r, ddof=1))
    if std == 0.0 or np.all(r == r[0]):
        raise DegenerateSeriesError("zero return variance; Sharpe undefined")
    return float(np.mean(r)) / std * math.sqrt(periods_per_year)


def _wealth_matrix(theta: float, sigma_hat: float, day_matrix: np.ndarray,
                   z: float, x0: float, r_f_daily: float, dt: float,
                   horizon: float, start_wealth: float | None = None) -> np.ndarray:
    """Wealth paths (days, m+1) from replaying each day's excess returns.

    start_wealth overrides the first wealth value; the policy anchor always
    uses the configured x0.
    """
    if not sigma_hat > 0:
        raise ConfigurationError(f"sigma_hat must be > 0, got {sigma_hat}")
    w = target_anchor(theta, z, x0, horizon)
    excess = day_matrix[:, 1:] / day_matrix[:, :-1] - 1.0 - r_f_daily * dt
    k = theta / sigma_hat
    m = excess.shape[1]
    wealth = np.empty((day_matrix.shape[0], m + 1))
    wealth[:, 0] = x0 if start_wealth is None else start_wealth
    for i in range(m):
        exposure = -k * (wealth[:, i] - w)
        wealth[:, i + 1] = wealth[:, i] + exposure * excess[:, i]
    if not np.isfinite(wealth).all():
        raise DivergenceError("wealth path became non-finite", episode=0, last_theta=theta)
    return wealth


def simulate_wealth(theta: float, sigma_hat: float, day_prices, z: float, x0: float,
                    r_f_daily: float = 0.0, dt: float = 1.0 / 79,
                    horizon: float = 1.0) -> float:
    """Terminal wealth from trading one day of prices under the policy."""
    prices = np.asarray(day_prices, dtype=float)
    if prices.ndim != 1 or prices.size < 2:
        raise InsufficientDataError("a trading day needs at least 2 prices")
    wealth = _wealth_matrix(theta, sigma_hat, prices[None, :], z, x0,
                            r_f_daily, dt, horizon)
    return float(wealth[0, -1])


@dataclass(frozen=True)
class BacktestConfig:
    learning: TrainConfig
    train_days: int = 126
    steps_per_day: int = 79
    horizon: float = 1.0
    target_wealth: float = 1.01
    initial_wealth: float = 1.0
    risk_free_daily: float = 0.0
    threshold_mode: str = "raw"
    warm_start: bool = True
    theta_min: float = 0.01
    theta_max: float = 10.0
    annualization: float = 252.0

    def __post_init__(self):
        if self.train_days < 2:
            raise ConfigurationError(f"train_days must be >= 2, got {self.train_days}")
        if self.steps_per_day < 1:
            raise ConfigurationError("steps_per_day must be >= 1")
        if self.target_wealth == self.initial_wealth:
            raise ConfigurationError("target z must differ from initial wealth x0")
        if self.threshold_mode not in THRESHOLD_MODES:
            raise ConfigurationError(
                f"threshold_mode must be one of {THRESHOLD_MODES}, got {self.threshold_mode!r}")
        if not 0 < self.theta_min < self.theta_max:
            raise ConfigurationError("need 0 < theta_min < theta_max")


@dataclass
class BacktestResult:
    test_days: list
    terminal_wealth: list
    daily_return: list
    theta_per_day: list
    sharpe_annualized: Optional[float]
    degenerate: bool
    loss_kind: str
    threshold_mode: str

    def to_json_dict(self) -> dict:
        return {
            "loss_kind": self.loss_kind,
            "threshold_mode": self.threshold_mode,
            "sharpe_annualized": self.sharpe_annualized,
            "degenerate": self.degenerate,
            "test_days": list(self.test_days),
            "terminal_wealth": list(self.terminal_wealth),
            "daily_return": list(self.daily_return),
            "theta_per_day": list(self.theta_per_day),
        }

    def per_day_csv(self) -> str:
        lines = ["date,theta,terminal_wealth,daily_return"]
        for day, th, tw, dr in zip(self.test_days, self.theta_per_day,
                                   self.terminal_wealth, self.daily_return):
            lines.append(f"{day},{th:.17g},{tw:.17g},{dr:.17g}")
        return "\n".join(lines) + "\n"


def _day_matrix(day_arrays: list[np.ndarray]) -> np.ndarray:
    """Stack per-day price rows, trimming to the shortest day if counts differ."""
    counts = {arr.size for arr in day_arrays}
    m = min(counts)
    if len(counts) > 1:
        warnings.warn(f"day lengths differ {sorted(counts)}; trimming to {m} rows")
    return np.stack([arr[:m] for arr in day_arrays])


def _daily_bipower(matrix: np.ndarray, log_scale: bool) -> float:
    """Mean over days of per-day bipower variation of the chosen increments."""
    data = np.log(matrix) if log_scale else matrix
    return float(np.mean([bipower_sigma2(np.diff(row)) for row in data]))


# On continuous data the bipower-product objective runs (2/pi) below the
# squared-difference objective, so each loss gets a step size scaled to its
# own gradient magnitude; the configured rate then means the same quiet-data
# learning speed for both estimators.
LOSS_RATE_SCALE = {"mstde": 1.0, "msbve": 2.0 / math.pi}


def _fit_theta(theta: float, matrix: np.ndarray, sigma_hat: float, loss_kind: str,
               config: BacktestConfig, model: MeanVarianceValue,
               times: np.ndarray, dt: float) -> float:
    """Gradient steps of the chosen loss on wealth paths replayed under theta."""
    lr = config.learning.learning_rate / LOSS_RATE_SCALE[loss_kind]
    for step in range(config.learning.episodes):
        wealth = _wealth_matrix(theta, sigma_hat, matrix, config.target_wealth,
                                config.initial_wealth, config.risk_free_daily,
                                dt, config.horizon)
        J = np.asarray(model.value(theta, times, wealth), dtype=float)
        dJ = np.asarray(model.dvalue_dtheta(theta, times, wealth), dtype=float)
        grad = float(np.mean(grads_by_row(loss_kind, J, dJ)))
        if not math.isfinite(grad):
            raise DivergenceError(f"non-finite gradient at daily step {step}",
                                  episode=step, last_theta=theta)
        theta = theta - lr * grad
        if not math.isfinite(theta):
            raise DivergenceError(f"non-finite theta at daily step {step}",
                                  episode=step, last_theta=theta)
        # risk bounds: keep the policy away from the w(theta) singularity and
        # from leverage the bar-level wealth recursion cannot support
        sign = theta if theta != 0 else 1.0
        theta = math.copysign(min(max(abs(theta), config.theta_min),
                                  config.theta_max), sign)
    return theta


def rolling_backtest(series: PriceSeries, config: BacktestConfig,
                     loss_kind: str) -> BacktestResult:
    """Walk the series one day at a time: fit theta on the trailing window,
    trade the next day, and summarize daily excess returns."""
    partition = series.day_partition
    if len(partition) < config.train_days + 1:
        raise IngestionError(
            f"need at least train_days + 1 = {config.train_days + 1} complete days, "
            f"got {len(partition)}")
    matrix = _day_matrix([series.prices[sl] for _, sl in partition])
    m = matrix.shape[1] - 1
    dt = config.horizon / m
    times = np.linspace(0.0, config.horizon, m + 1)[None, :]
    model = MeanVarianceValue(z=config.target_wealth, x0=config.initial_wealth,
                              horizon=config.horizon)

    theta = config.learning.theta0
    days_out, wealth_out, return_out, theta_out = [], [], [], []
    for d in range(config.train_days, len(partition)):
        if not config.warm_start:
            theta = config.learning.theta0
        window = matrix[d - config.train_days:d]
        sigma2_price = _daily_bipower(window, log_scale=False)
        tau = jump_threshold(math.sqrt(sigma2_price), 1.0 / config.steps_per_day)
        if config.threshold_mode == "thresholded":
            lo = partition[d - config.train_days][1].start
            hi = partition[d - 1][1].stop
            filtered = threshold_series(series.sub_series(lo, hi), tau)
            train_view = _day_matrix([filtered.prices[sl] for _, sl in
                                      filtered.day_partition])[:, :m + 1]
        else:
            train_view = window
        sigma2_ret = _daily_bipower(train_view, log_scale=True)
        if sigma2_ret <= 0.0:
            raise ConfigurationError(
                f"window before {partition[d][0]} has zero bipower variance")
        sigma_hat = math.sqrt(sigma2_ret)

        theta = _fit_theta(theta, train_view, sigma_hat, loss_kind, config,
                           model, times, dt)

        terminal = simulate_wealth(theta, sigma_hat, matrix[d], config.target_wealth,
                                   config.initial_wealth, config.risk_free_daily,
                                   dt, config.horizon)
        days_out.append(partition[d][0])
        wealth_out.append(terminal)
        return_out.append((terminal - config.initial_wealth) / config.initial_wealth
                          - config.risk_free_daily)
        theta_out.append(theta)

    try:
        ratio = sharpe(return_out, config.annualization)
        degenerate = False
    except DegenerateSeriesError:
        ratio = None
        degenerate = True
    return BacktestResult(test_days=days_out, terminal_wealth=wealth_out,
                          daily_return=return_out, theta_per_day=theta_out,
                          sharpe_annualized=ratio, degenerate=degenerate,
                          loss_kind=loss_kind, threshold_mode=config.threshold_mode)


def synthetic_gbm_jump_series(n_days: int, bars_per_day: int = 79,
                              annual_drift: float = 0.10, annual_vol: float = 0.20,
                              jump_prob_per_day: float = 0.1,
                              jump_size_sigmas: float = 5.0, seed: int = 0,
                              s0: float = 100.0,
                              start: str = "2020-01-01") -> PriceSeries:
    """Intraday geometric Brownian bars with occasional one-bar log jumps.

    Each day holds bars_per_day + 1 prices opening at the prior close; with
    probability jump_prob_per_day one uniformly placed bar gains an extra
    jump_size_sigmas DAILY standard deviations of log return. Sized in daily
    units so the default jumps clear the detection threshold
    4 sigma dt^0.47 (about 0.51 daily sigmas at 79 bars per day).
    """
    rng = stream(seed)
    dt_years = 1.0 / (252.0 * bars_per_day)
    bar_vol = annual_vol * math.sqrt(dt_years)
    daily_vol = annual_vol / math.sqrt(252.0)
    bar_drift = (annual_drift - 0.5 * annual_vol ** 2) * dt_years
    day0 = np.datetime64(start, "s")
    bar_offsets = (np.datetime64(start, "s") + np.arange(bars_per_day + 1) * 300
                   - day0).astype("timedelta64[s]")
    open_time = np.timedelta64(9 * 3600 + 30 * 60, "s")

    stamps = []
    prices = []
    level = math.log(s0)
    for d in range(n_days):
        log_inc = bar_drift + bar_vol * rng.standard_normal(bars_per_day)
        if rng.random() < jump_prob_per_day:
            log_inc[rng.integers(bars_per_day)] += jump_size_sigmas * daily_vol
        levels = level + np.concatenate([[0.0], np.cumsum(log_inc)])
        level = levels[-1]
        day_start = day0 + np.timedelta64(d, "D").astype("timedelta64[s]") + open_time
        stamps.append(day_start + bar_offsets)
        prices.append(np.exp(levels))
    return build_price_series(np.concatenate(stamps), np.concatenate(prices),
                              bars_per_day)
