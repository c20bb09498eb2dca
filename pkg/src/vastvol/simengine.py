"""Simulated market: factor-model latent prices with stochastic log-volatility,
Poisson trading times and additive microstructure noise.

Per asset i the latent log-price follows

    dX_i = mu_i dt + rho_i sig_i dB_i + sqrt(1 - rho_i^2) sig_i dW + lam_i dZ_i,

with B_i, Z_i, U_i idiosyncratic Brownian motions, W a factor shared by all
assets, and log-volatility an Ornstein-Uhlenbeck process

    d log sig_i = alpha_i (beta0_i - log sig_i) dt + b_i dU_i

started from its stationary law. Volatility parameters are quoted on an
annualized scale: sig_i = exp(log sig_i) is an annual volatility, so daily
quantities are scaled by 1/252 inside the Euler stepper. Trading times are
per-day Poisson processes; observed log-prices add i.i.d. Gaussian noise.

The Euler grid is one point per second over a 23400-second trading day; day
boundaries share a grid point, so closes equal next opens by construction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .estimators import CovEstimate, Method, synchronous_cov
from .tickdata import TickPanel, TickSeries

SECONDS_PER_DAY = 23400
TRADING_DAYS_PER_YEAR = 252

# Stationary variance of log-volatility as a multiple of beta1^2. The OU
# diffusion is derived from this so that daily covariance eigenvalues stay
# on a realistic equity scale (annual vols mostly between 15% and 150%).
LOG_VOL_VAR_SCALE = 1.8


@dataclass(frozen=True)
class AssetParams:
    """Dynamics parameters of one simulated asset.

    ``mu`` is annual drift, ``beta0`` the stationary mean of log annual
    volatility, ``beta1`` the volatility-of-volatility level (the stationary
    sd of log-vol is sqrt(1.6) * beta1), ``alpha`` the mean-reversion rate
    per trading day, ``rho`` the loading split between own and common
    Brownian factors, ``lam`` the idiosyncratic diffusion coefficient, and
    ``trade_intensity`` the expected number of trades per day.
    """

    mu: float
    beta0: float
    beta1: float
    alpha: float
    rho: float
    lam: float
    trade_intensity: float

    def __post_init__(self):
        if self.alpha <= 0:
            raise ValueError("alpha must be positive")
        if self.beta1 <= 0:
            raise ValueError("beta1 must be positive")
        if not abs(self.rho) < 1:
            raise ValueError("|rho| must be < 1")
        if self.trade_intensity <= 0:
            raise ValueError("trade_intensity must be positive")

    @property
    def log_vol_stationary_var(self) -> float:
        return LOG_VOL_VAR_SCALE * self.beta1 ** 2

    @property
    def ou_diffusion(self) -> float:
        # per sqrt(day); gives the stationary variance above
        return float(np.sqrt(2.0 * self.alpha * self.log_vol_stationary_var))


def default_params(p: int, rng_seed: int) -> list[AssetParams]:
    """The standard parameter recipe for ``p`` assets.

    Draws x_1..x_4 ~ U[0.7, 1.3] independently per asset and sets
    (mu, beta0, beta1, alpha, rho) = (0.03 x1, -x2, 0.75 x3, x4/40, -0.7)
    with lam = exp(beta0). Trading intensities form the arithmetic sequence
    0.02 * i * 23400, i = 1..p (spanning [468, 23400] at p = 50).
    """
    if p < 1:
        raise ValueError("p must be at least 1")
    rng = np.random.default_rng(np.random.SeedSequence(rng_seed))
    out = []
    for i in range(1, p + 1):
        x = rng.uniform(0.7, 1.3, size=4)
        beta0 = -x[1]
        out.append(
            AssetParams(
                mu=0.03 * x[0],
                beta0=beta0,
                beta1=0.75 * x[2],
                alpha=x[3] / 40.0,
                rho=-0.7,
                lam=float(np.exp(beta0)),
                trade_intensity=0.02 * i * SECONDS_PER_DAY,
            )
        )
    return out


@dataclass
class SimPaths:
    """Simulated latent grid, spot volatilities and per-day tick panels.

    ``latent_log_prices`` has shape (p, n_days * 23400 + 1): one point per
    second with shared day boundaries. ``spot_vols`` (same shape, annual
    vols) may be omitted to save memory on long horizons.
    """

    seconds_per_day: int
    n_days: int
    asset_ids: tuple[str, ...]
    params: tuple[AssetParams, ...]
    latent_log_prices: np.ndarray
    spot_vols: np.ndarray | None
    tick_panels: tuple[TickPanel, ...]
    rng_seed: int

    @property
    def p(self) -> int:
        return len(self.asset_ids)

    def day_grid(self, day: int) -> np.ndarray:
        """View of the latent grid for one day, including both endpoints."""
        n = self.seconds_per_day
        return self.latent_log_prices[:, day * n : (day + 1) * n + 1]


def _poisson_times(rng: np.random.Generator, intensity: float) -> np.ndarray:
    """Event times of a unit-interval Poisson process, in (0, 1]."""
    times = []
    t = 0.0
    block = max(int(intensity + 6.0 * np.sqrt(intensity)) + 16, 16)
    while True:
        gaps = rng.exponential(1.0 / intensity, size=block)
        t_new = t + np.cumsum(gaps)
        inside = t_new[t_new <= 1.0]
        times.append(inside)
        if len(inside) < block:
            break
        t = t_new[-1]
    return np.concatenate(times)


def asset_names(p: int) -> tuple[str, ...]:
    width = max(2, len(str(p)))
    return tuple(f"A{i:0{width}d}" for i in range(1, p + 1))


def simulate(
    params: list[AssetParams],
    n_days: int,
    noise_std: float,
    rng_seed: int,
    store_spot_vols: bool = True,
) -> SimPaths:
    """Generate latent second-by-second paths and noisy Poisson-sampled ticks.

    Fully reproducible from ``rng_seed``: the shared factor and each asset
    use independent child streams of one seed sequence, consumed in a fixed
    day-major order. Tick timestamps are continuous; tick prices snap to the
    most recent latent grid value before noise is added.
    """
    if n_days < 1:
        raise ValueError("n_days must be at least 1")
    if noise_std < 0:
        raise ValueError("noise_std must be non-negative")
    p = len(params)
    ids = asset_names(p)
    n = SECONDS_PER_DAY
    dt = 1.0 / n  # day units
    sq_dt = np.sqrt(dt)
    day_to_year = 1.0 / TRADING_DAYS_PER_YEAR

    mu_dt = np.array([a.mu * day_to_year * dt for a in params])
    alpha_dt = np.array([a.alpha * dt for a in params])
    beta0 = np.array([a.beta0 for a in params])
    bvol_sqdt = np.array([a.ou_diffusion * sq_dt for a in params])
    rho = np.array([a.rho for a in params])
    lam_sqdt = np.array([a.lam * np.sqrt(day_to_year) * sq_dt for a in params])
    # the state-dependent diffusion exp(log-vol) is annual: scale the factor
    # and idiosyncratic shocks to daily units here
    shock_scale = np.sqrt(day_to_year) * sq_dt
    intensities = [a.trade_intensity for a in params]

    ss = np.random.SeedSequence(rng_seed)
    children = ss.spawn(p + 1)
    gen_w = np.random.default_rng(children[0])
    gens = [np.random.default_rng(c) for c in children[1:]]

    x = np.empty((p, n_days * n + 1))
    x[:, 0] = 1.0
    vols = np.empty_like(x) if store_spot_vols else None

    r_state = np.array(
        [
            g.normal(a.beta0, np.sqrt(a.log_vol_stationary_var))
            for g, a in zip(gens, params)
        ]
    )
    x_state = x[:, 0].copy()
    if vols is not None:
        vols[:, 0] = np.exp(r_state)

    panels = []
    for day in range(n_days):
        dw = gen_w.standard_normal(n) * shock_scale
        db = np.empty((p, n))
        du = np.empty((p, n))
        dz = np.empty((p, n))
        for a in range(p):
            db[a] = gens[a].standard_normal(n)
            du[a] = gens[a].standard_normal(n)
            dz[a] = gens[a].standard_normal(n)
        db *= shock_scale
        x_day, r_day = _kernels.euler_day(
            x_state, r_state, mu_dt, alpha_dt, beta0, bvol_sqdt, rho, lam_sqdt,
            dw, db, du, dz,
        )
        lo = day * n + 1
        x[:, lo : lo + n] = x_day
        if vols is not None:
            vols[:, lo : lo + n] = np.exp(r_day)
        x_state = x_day[:, -1].copy()
        r_state = r_day[:, -1].copy()

        day_grid = x[:, day * n : (day + 1) * n + 1]
        series = []
        empty = []
        for a in range(p):
            tick_frac = _poisson_times(gens[a], intensities[a])
            sec = tick_frac * float(n)
            if len(sec) > 1:
                # exponential gaps below one ulp would alias to equal stamps
                sec = sec[np.concatenate(([True], np.diff(sec) > 0))]
            grid_idx = np.floor(sec).astype(np.int64)
            latent_at_tick = day_grid[a, grid_idx]
            if noise_std > 0:
                obs = latent_at_tick + gens[a].standard_normal(len(sec)) * noise_std
            else:
                obs = latent_at_tick.copy()
            if len(sec) == 0:
                empty.append(ids[a])
            series.append(TickSeries(ids[a], sec, obs))
        panels.append(TickPanel(float(n), tuple(series), tuple(empty)))

    return SimPaths(
        seconds_per_day=n,
        n_days=n_days,
        asset_ids=ids,
        params=tuple(params),
        latent_log_prices=x,
        spot_vols=vols,
        tick_panels=tuple(panels),
        rng_seed=rng_seed,
    )


def latent_oracle_cov(
    paths: SimPaths, day_range: tuple[int, int], estimator: str = "rv"
) -> CovEstimate:
    """Covariance matrix estimated from the noiseless latent grid.

    Reads the quadratic covariation off the synchronous one-per-second
    latent prices over ``day_range = (start_day, end_day)`` (end exclusive);
    serves as ground truth for risk assessment in simulation studies. The
    default realized-covariance reading has O(1/sqrt(m)) error on the
    noise-free grid; ``estimator='tscv'`` applies the two-scale machinery
    instead, whose subsampling variance is substantial and only pays off
    under observation noise.
    """
    start, end = day_range
    if not (0 <= start < end <= paths.n_days):
        raise ValueError(f"day range ({start}, {end}) outside 0..{paths.n_days}")
    n = paths.seconds_per_day
    window = paths.latent_log_prices[:, start * n : end * n + 1]
    return synchronous_cov(
        window, window_days=float(end - start), asset_ids=paths.asset_ids,
        method=Method.LATENT_ORACLE, estimator=estimator,
    )


def latent_window_returns(
    paths: SimPaths, day_range: tuple[int, int], interval_seconds: int = 900
) -> np.ndarray:
    """Latent log-returns on a fixed intraday grid, e.g. 15-minute (900 s).

    Returns an (n_intervals, p) matrix; intervals never straddle a day
    boundary. ``interval_seconds`` must divide the trading day.
    """
    start, end = day_range
    if not (0 <= start < end <= paths.n_days):
        raise ValueError(f"day range ({start}, {end}) outside 0..{paths.n_days}")
    n = paths.seconds_per_day
    if n % interval_seconds != 0:
        raise ValueError(f"{interval_seconds} does not divide the {n}-second day")
    rows = []
    offsets = np.arange(0, n + 1, interval_seconds)
    for day in range(start, end):
        marks = paths.latent_log_prices[:, day * n + offsets]
        rows.append(np.diff(marks, axis=1).T)
    return np.concatenate(rows, axis=0)


def write_latent_csv(paths: SimPaths, day: int, path) -> None:
    """Write one day's latent grid: columns time_s plus one per asset."""
    n = paths.seconds_per_day
    grid = paths.day_grid(day)
    with open(path, "w") as fh:
        fh.write("time_s," + ",".join(paths.asset_ids) + "\n")
        for k in range(n + 1):
            row = ",".join(f"{grid[a, k]:.12g}" for a in range(paths.p))
            fh.write(f"{k},{row}\n")


def write_params_csv(params: list[AssetParams], asset_ids, path) -> None:
    with open(path, "w") as fh:
        fh.write("asset_id,mu,beta0,beta1,alpha,rho,lam,trade_intensity\n")
        for asset, a in zip(asset_ids, params):
            fh.write(
                f"{asset},{a.mu:.12g},{a.beta0:.12g},{a.beta1:.12g},"
                f"{a.alpha:.12g},{a.rho:.12g},{a.lam:.12g},{a.trade_intensity:.12g}\n"
            )
