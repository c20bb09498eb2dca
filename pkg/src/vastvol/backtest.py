"""In-sample risk-approximation study and out-of-sample rolling backtests.

The in-sample study compares perceived risks of fixed test portfolios under
each covariance estimator against the latent-oracle risks, replication by
replication, and summarizes medians with robust standard deviations.

The out-of-sample runner re-estimates the covariance matrix from a trailing
data window at each rebalance date, solves the gross-exposure constrained
allocation, holds the position for the specified number of days and records
portfolio log-returns on a 15-minute assessment grid. Positions are bought
and held within a holding period, so effective weights drift with prices;
risk statistics come from the realized return series.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .estimators import (
    CovEstimate,
    Method,
    estimate_matrix_allrefresh,
    estimate_matrix_pairwise,
    lowfreq_sample_cov,
    synchronous_cov,
)
from .exceptions import InsufficientDataError
from .portfolio import PortfolioWeights, solve_min_variance
from .psdproject import project_cov
from .tickdata import TickPanel, concat_days

SECONDS_PER_DAY = 23400
TRADING_DAYS_PER_YEAR = 252
ASSESSMENT_INTERVAL_S = 900


class Estimator(str, enum.Enum):
    LOWFREQ_100D = "LowFreq100d"
    ALLREFRESH_TSCV_10D = "AllRefreshTSCV10d"
    ALLREFRESH_RK_10D = "AllRefreshRK10d"
    PAIRWISE_TSCV_10D = "PairwiseTSCV10d"
    LATENT_ORACLE_1D = "LatentOracle1d"
    EQUAL_WEIGHT = "EqualWeight"


@dataclass(frozen=True)
class StrategySpec:
    """One backtest strategy: estimator, holding period, projection, c grid."""

    estimator: Estimator
    holding_days: int = 1
    c_grid: tuple[float, ...] = (1.0, 1.2, 1.4, 1.6, 1.8, 2.0, 3.0)
    projection: str = "shift"
    lowfreq_window: int = 100
    hf_window: int = 10
    kernel_h: int = 1

    def __post_init__(self):
        if self.holding_days < 1:
            raise ValueError("holding_days must be >= 1")
        if any(c < 1 for c in self.c_grid):
            raise ValueError("every gross exposure c must be >= 1")

    @property
    def history_days(self) -> int:
        if self.estimator == Estimator.LOWFREQ_100D:
            return self.lowfreq_window
        if self.estimator == Estimator.EQUAL_WEIGHT:
            return 0
        if self.estimator == Estimator.LATENT_ORACLE_1D:
            return 1
        return self.hf_window


@dataclass
class BacktestReport:
    """Per-(strategy, c) backtest outcome.

    ``period_returns`` is the chronological series of 15-minute portfolio
    log-returns; weight statistics are medians over rebalance dates, with
    long/short counts at the 0.001 absolute-weight threshold.
    """

    strategy: str
    c: float
    annualized_std: float
    annualized_mean: float
    max_weight: float
    min_weight: float
    n_long: float
    n_short: float
    period_returns: list[float] = field(default_factory=list)
    n_rebalances: int = 0


def robust_sd(values) -> float:
    """Interquartile range divided by 1.35."""
    v = np.asarray(values, dtype=np.float64)
    q75, q25 = np.percentile(v, [75, 25])
    return float((q75 - q25) / 1.35)


def study_portfolios(p: int, b: float = 3.0) -> dict[str, np.ndarray]:
    """The four fixed test portfolios used by the in-sample study."""
    if p < 2:
        raise ValueError("need at least 2 assets")
    w1 = np.full(p, 1.0 / p)
    w2 = np.zeros(p)
    w2[0] = 1.0
    w3 = np.full(p, 1.0 / p)
    w3[0] = b / 2.0 - 0.5 + 2.0 / p
    w3[1] = 0.5 - b / 2.0
    w4 = np.zeros(p)
    w4[0] = 0.5 + b / 2.0
    w4[1] = 0.5 - b / 2.0
    return {"w1": w1, "w2": w2, "w3": w3, "w4": w4}


def _annualized_portfolio_risk(w: np.ndarray, est: CovEstimate) -> float:
    """sqrt of the quadratic form, annualized; NaN when the form is negative."""
    q = float(w @ est.matrix @ w)
    if q < 0:
        return float("nan")
    return float(np.sqrt(q * TRADING_DAYS_PER_YEAR / est.window_days))


ORACLE_LABEL = "Latent"

_IN_SAMPLE_METHODS = (
    ORACLE_LABEL,
    Method.ALLREFRESH_TSCV.value,
    Method.ALLREFRESH_RK.value,
    Method.PAIRWISE_TSCV.value,
)


@dataclass
class InSampleStudy:
    """Replication-level results of the in-sample risk-approximation study."""

    n_reps: int
    portfolio_names: tuple[str, ...]
    methods: tuple[str, ...]
    # per (portfolio, method): replication series of annualized risks
    risks: dict[tuple[str, str], np.ndarray]
    # per (portfolio, method): |risk - oracle risk| series (oracle excluded)
    abs_diffs: dict[tuple[str, str], np.ndarray]
    # per method: replication series of a_p against the oracle
    a_p: dict[str, np.ndarray]
    # per (method, c): median actual risk of the estimated-optimal allocation
    allocation_curve: dict[tuple[str, float], float]

    def median_rsd(self, table: str, key) -> tuple[float, float]:
        values = {"risks": self.risks, "abs_diffs": self.abs_diffs, "a_p": self.a_p}[
            table
        ][key]
        values = values[~np.isnan(values)]
        return float(np.median(values)), robust_sd(values)


def in_sample_study(
    paths,
    n_reps: int,
    c_grid: tuple[float, ...] = (),
    kernel_h: int = 1,
    workers: int = 1,
) -> InSampleStudy:
    """Single-day risk approximation across ``n_reps`` simulated days.

    For each day, estimates the covariance matrix from that day's ticks by
    every high-frequency method, compares perceived risks of the four fixed
    portfolios with the latent-oracle risks, and records the sup-norm error
    a_p. When ``c_grid`` is non-empty, additionally solves the constrained
    allocation under each (projected) estimate and records the median actual
    risk under the oracle per gross-exposure value.
    """
    from .simengine import latent_oracle_cov

    if n_reps < 1 or n_reps > paths.n_days:
        raise ValueError(f"n_reps must be in 1..{paths.n_days}")
    p = paths.p
    portfolios = study_portfolios(p)
    names = tuple(portfolios)
    risks = {(w, m): np.full(n_reps, np.nan) for w in names for m in _IN_SAMPLE_METHODS}
    abs_diffs = {
        (w, m): np.full(n_reps, np.nan)
        for w in names
        for m in _IN_SAMPLE_METHODS
        if m != ORACLE_LABEL
    }
    a_p = {m: np.full(n_reps, np.nan) for m in _IN_SAMPLE_METHODS if m != ORACLE_LABEL}
    curve_samples: dict[tuple[str, float], list[float]] = {
        (m, c): [] for m in _IN_SAMPLE_METHODS for c in c_grid
    }

    for rep in range(n_reps):
        panel = paths.tick_panels[rep]
        oracle = latent_oracle_cov(paths, (rep, rep + 1))
        estimates = {
            ORACLE_LABEL: oracle,
            Method.ALLREFRESH_TSCV.value: estimate_matrix_allrefresh(
                panel, 1.0, method="TSCV", workers=workers
            ),
            Method.ALLREFRESH_RK.value: estimate_matrix_allrefresh(
                panel, 1.0, method="RK", kernel_h=kernel_h, workers=workers
            ),
            Method.PAIRWISE_TSCV.value: estimate_matrix_pairwise(
                panel, 1.0, workers=workers
            ),
        }
        for wname, w in portfolios.items():
            oracle_risk = _annualized_portfolio_risk(w, oracle)
            risks[(wname, ORACLE_LABEL)][rep] = oracle_risk
            for m, est in estimates.items():
                if m == ORACLE_LABEL:
                    continue
                r = _annualized_portfolio_risk(w, est)
                risks[(wname, m)][rep] = r
                abs_diffs[(wname, m)][rep] = abs(r - oracle_risk)
        for m, est in estimates.items():
            if m != ORACLE_LABEL:
                a_p[m][rep] = float(np.abs(est.matrix - oracle.matrix).max())
        for c in c_grid:
            for m, est in estimates.items():
                projected = project_cov(est, "shift")
                w = solve_min_variance(projected, c)
                curve_samples[(m, c)].append(
                    _annualized_portfolio_risk(w.w, oracle)
                )

    curve = {key: float(np.median(v)) for key, v in curve_samples.items() if v}
    return InSampleStudy(
        n_reps=n_reps,
        portfolio_names=names,
        methods=_IN_SAMPLE_METHODS,
        risks=risks,
        abs_diffs=abs_diffs,
        a_p=a_p,
        allocation_curve=curve,
    )


# ---------------------------------------------------------------------------
# Out-of-sample rolling backtest
# ---------------------------------------------------------------------------

def daily_closes(tick_days: list[TickPanel]) -> np.ndarray:
    """Last observed tick log-price per asset per day, (n_days, p)."""
    ids = tick_days[0].asset_ids
    closes = np.empty((len(tick_days), len(ids)))
    for d, panel in enumerate(tick_days):
        for a, s in enumerate(panel.series):
            if len(s) == 0:
                raise InsufficientDataError(
                    f"asset {s.asset_id!r} has no ticks on day {d}"
                )
            closes[d, a] = s.log_prices[-1]
    return closes


def observed_mark_prices(panel: TickPanel, interval_s: int = ASSESSMENT_INTERVAL_S):
    """Previous-tick observed log-prices at intraday marks 0, 900, ..., 23400.

    The first mark of a day, before any trade, falls back to the day's first
    tick so that the open is priced.
    """
    n = int(panel.window_length_seconds)
    if n % interval_s != 0:
        raise ValueError(f"{interval_s} does not divide the {n}-second day")
    marks = np.arange(0, n + 1, interval_s, dtype=np.float64)
    out = np.empty((panel.p, len(marks)))
    for a, s in enumerate(panel.series):
        if len(s) == 0:
            raise InsufficientDataError(f"asset {s.asset_id!r} has no ticks")
        idx = np.searchsorted(s.times, marks, side="right") - 1
        idx = np.maximum(idx, 0)
        out[a] = s.log_prices[idx]
    return out


def _estimate_for_day(
    spec: StrategySpec,
    day: int,
    tick_days: list[TickPanel],
    latent_days,
    closes: np.ndarray | None,
    workers: int,
) -> CovEstimate | None:
    """Covariance estimate available at the open of ``day`` (no look-ahead:
    only data from days < day enter the window)."""
    est = spec.estimator
    if est == Estimator.EQUAL_WEIGHT:
        return None
    if est == Estimator.LOWFREQ_100D:
        window = closes[day - spec.lowfreq_window : day]
        return lowfreq_sample_cov(window, asset_ids=tick_days[0].asset_ids)
    if est == Estimator.LATENT_ORACLE_1D:
        grid = latent_days[day - 1]
        return synchronous_cov(
            grid, window_days=1.0, asset_ids=tick_days[0].asset_ids,
            method=Method.LATENT_ORACLE,
        )
    panel = concat_days(tick_days[day - spec.hf_window : day], SECONDS_PER_DAY)
    if est == Estimator.PAIRWISE_TSCV_10D:
        return estimate_matrix_pairwise(panel, float(spec.hf_window), workers=workers)
    if est == Estimator.ALLREFRESH_TSCV_10D:
        return estimate_matrix_allrefresh(
            panel, float(spec.hf_window), method="TSCV", workers=workers
        )
    if est == Estimator.ALLREFRESH_RK_10D:
        return estimate_matrix_allrefresh(
            panel, float(spec.hf_window), method="RK", kernel_h=spec.kernel_h,
            workers=workers,
        )
    raise ValueError(f"unknown estimator {est}")


def out_of_sample_sweep(
    tick_days: list[TickPanel],
    latent_days,
    spec: StrategySpec,
    c_values,
    start_day: int | None = None,
    workers: int = 1,
) -> list[BacktestReport]:
    """Rolling buy-and-hold backtest of one strategy over a grid of caps.

    The covariance matrix is estimated and projected once per rebalance date
    and shared by every exposure value; each c tracks its own wealth and
    position path. ``latent_days`` is an optional sequence of per-day latent
    grids, (p, 23401) each; when present, assessment prices are latent
    (simulation mode), otherwise observed previous-tick prices at 15-minute
    marks are used and overnight intervals contribute no return observations
    (empirical mode). ``start_day`` defaults to the estimator's required
    history.
    """
    c_values = list(c_values)
    if any(c < 1 for c in c_values):
        raise ValueError("every gross exposure c must be >= 1")
    n_days = len(tick_days)
    if n_days == 0:
        raise InsufficientDataError("no tick days supplied")
    p = tick_days[0].p
    required = spec.history_days
    start = required if start_day is None else start_day
    if start < required:
        raise InsufficientDataError(
            f"start day {start} precedes required history {required}"
        )
    if start >= n_days:
        raise InsufficientDataError(
            f"start day {start} leaves no investment days (have {n_days})"
        )
    closes = None
    if spec.estimator == Estimator.LOWFREQ_100D:
        closes = daily_closes(tick_days)
    if spec.estimator == Estimator.LATENT_ORACLE_1D and latent_days is None:
        raise InsufficientDataError("latent grids required for the oracle strategy")

    mark_cache: dict[int, np.ndarray] = {}

    def marks_for(day: int) -> np.ndarray:
        if day not in mark_cache:
            if latent_days is not None:
                mark_cache[day] = np.asarray(latent_days[day])[:, ::ASSESSMENT_INTERVAL_S]
            else:
                mark_cache[day] = observed_mark_prices(tick_days[day])
        return mark_cache[day]

    returns: dict[float, list[float]] = {c: [] for c in c_values}
    stats: dict[float, dict[str, list]] = {
        c: {"max": [], "min": [], "long": [], "short": []} for c in c_values
    }
    wealth = {c: 1.0 for c in c_values}
    for day in range(start, n_days, spec.holding_days):
        if spec.estimator == Estimator.EQUAL_WEIGHT:
            per_c = {c: PortfolioWeights.from_vector(np.full(p, 1.0 / p)) for c in c_values}
        else:
            est = _estimate_for_day(spec, day, tick_days, latent_days, closes, workers)
            projected = project_cov(est, spec.projection)
            per_c = {c: solve_min_variance(projected, c) for c in c_values}

        open_prices = np.exp(marks_for(day)[:, 0])
        holding_range = range(day, min(day + spec.holding_days, n_days))
        day_prices = [np.exp(marks_for(dd)) for dd in holding_range]
        for c, weights in per_c.items():
            stats[c]["max"].append(weights.max_weight)
            stats[c]["min"].append(weights.min_weight)
            stats[c]["long"].append(weights.n_long)
            stats[c]["short"].append(weights.n_short)
            holdings = wealth[c] * weights.w / open_prices
            for prices in day_prices:
                values = holdings @ prices
                if np.any(values <= 0):
                    raise ArithmeticError(
                        f"portfolio value hit zero around day {day}; returns undefined"
                    )
                returns[c].extend(np.diff(np.log(values)).tolist())
                wealth[c] = float(values[-1])
        mark_cache.clear()

    per_year = (SECONDS_PER_DAY // ASSESSMENT_INTERVAL_S) * TRADING_DAYS_PER_YEAR
    reports = []
    for c in c_values:
        r = np.asarray(returns[c])
        reports.append(
            BacktestReport(
                strategy=spec.estimator.value,
                c=c,
                annualized_std=float(r.std(ddof=1) * np.sqrt(per_year)),
                annualized_mean=float(r.mean() * per_year),
                max_weight=float(np.median(stats[c]["max"])),
                min_weight=float(np.median(stats[c]["min"])),
                n_long=float(np.median(stats[c]["long"])),
                n_short=float(np.median(stats[c]["short"])),
                period_returns=returns[c],
                n_rebalances=len(stats[c]["max"]),
            )
        )
    return reports


def out_of_sample_run(
    tick_days: list[TickPanel],
    latent_days,
    spec: StrategySpec,
    c: float,
    start_day: int | None = None,
    workers: int = 1,
) -> BacktestReport:
    """Single-cap convenience wrapper around :func:`out_of_sample_sweep`."""
    return out_of_sample_sweep(
        tick_days, latent_days, spec, [c], start_day=start_day, workers=workers
    )[0]


@dataclass(frozen=True)
class RiskCurvePoint:
    strategy: str
    c: float
    annualized_std: float
    max_weight: float


@dataclass(frozen=True)
class RiskCurve:
    """Risk-vs-exposure rows per strategy plus the per-strategy minimizer."""

    points: tuple[RiskCurvePoint, ...]
    argmin_c: dict[str, float]
    min_std: dict[str, float]
    at_boundary: dict[str, bool]


def risk_curve(reports: list[BacktestReport]) -> RiskCurve:
    """Aggregate per-(strategy, c) reports into plot-ready risk curves.

    Requires at least 3 distinct exposure values per strategy; a minimizer
    at the end of the c grid is flagged as a boundary solution.
    """
    by_strategy: dict[str, list[BacktestReport]] = {}
    for rep in reports:
        by_strategy.setdefault(rep.strategy, []).append(rep)
    points = []
    argmin_c, min_std, at_boundary = {}, {}, {}
    for strategy, reps in by_strategy.items():
        reps = sorted(reps, key=lambda r: r.c)
        cs = [r.c for r in reps]
        if len(set(cs)) < 3:
            raise ValueError(
                f"strategy {strategy!r} has {len(set(cs))} c values; need >= 3"
            )
        stds = [r.annualized_std for r in reps]
        k = int(np.argmin(stds))
        argmin_c[strategy] = cs[k]
        min_std[strategy] = stds[k]
        at_boundary[strategy] = k in (0, len(reps) - 1)
        points.extend(
            RiskCurvePoint(strategy, r.c, r.annualized_std, r.max_weight) for r in reps
        )
    return RiskCurve(tuple(points), argmin_c, min_std, at_boundary)
