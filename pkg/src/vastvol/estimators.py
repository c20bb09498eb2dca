"""Integrated volatility and covariance estimators.

Univariate building blocks: the two-scale realized volatility (TSRV) of
Zhang, Mykland & Ait-Sahalia (2005), its covariance extension TSCV on
refresh-sampled previous-tick prices (Zhang 2011), a Parzen realized-kernel
baseline, and the low-frequency sample covariance of daily closes.

Matrix assembly supports the pairwise-refresh strategy (each entry on its
own pair grid; not necessarily positive semi-definite) and the all-refresh
strategy (one common grid for all assets).
"""

from __future__ import annotations

import enum
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .exceptions import InsufficientDataError
from .sync import all_refresh, pairwise_refresh, sampled_log_prices
from .tickdata import TickPanel


class Method(str, enum.Enum):
    PAIRWISE_TSCV = "PairwiseTSCV"
    ALLREFRESH_TSCV = "AllRefreshTSCV"
    ALLREFRESH_RK = "AllRefreshRK"
    LOWFREQ_SAMPLE = "LowFreqSample"
    LATENT_ORACLE = "LatentOracle"


@dataclass(frozen=True)
class TwoScaleConfig:
    """Slow scale K and fast scale J (default 1) for two-scale estimators."""

    K: int
    J: int = 1

    def __post_init__(self):
        if not (1 <= self.J < self.K):
            raise ValueError(f"need 1 <= J < K, got J={self.J}, K={self.K}")


@dataclass
class CovEstimate:
    """A per-window integrated covariance matrix with method metadata.

    ``matrix`` is symmetric, in squared log-return units over the window.
    ``pair_counts`` holds the per-pair refresh counts (a common count
    replicated for single-grid methods) and ``n_min`` their off-diagonal
    minimum. Entries that could not be estimated are zero-filled and listed
    in ``rejections`` as ``(asset_i, asset_j, reason)``.
    """

    asset_ids: tuple[str, ...]
    matrix: np.ndarray
    method: Method
    pair_counts: np.ndarray
    n_min: int
    window_days: float
    rejections: tuple[tuple[str, str, str], ...] = field(default=())
    projection: str | None = None

    @property
    def p(self) -> int:
        return len(self.asset_ids)

    def validate(self) -> None:
        m = self.matrix
        if m.shape != (self.p, self.p):
            raise ValueError("matrix shape does not match asset count")
        scale = max(np.abs(m).max(), 1e-300)
        if np.abs(m - m.T).max() > 1e-12 * scale:
            raise ValueError("matrix is not symmetric")
        if np.abs(self.pair_counts - self.pair_counts.T).max() != 0:
            raise ValueError("pair_counts is not symmetric")
        if self.window_days <= 0:
            raise ValueError("window_days must be positive")


def choose_two_scale(n: int) -> TwoScaleConfig:
    """Scale selection K = round(n^(2/3)), J = 1, for ``n`` observations.

    K is adjusted in unit steps until the subsample count
    nbar_K = (n - K + 1) / K lies in [n^(1/3)/2, 2 n^(1/3)].
    """
    if n < 8:
        raise InsufficientDataError(f"need n >= 8 observations, got {n}")
    lo = 0.5 * n ** (1.0 / 3.0)
    hi = 2.0 * n ** (1.0 / 3.0)
    K = int(round(n ** (2.0 / 3.0)))
    K = max(2, min(K, n - 1))
    while (n - K + 1) / K > hi and K < n - 1:
        K += 1
    while (n - K + 1) / K < lo and K > 2:
        K -= 1
    return TwoScaleConfig(K=K)


def _two_scale_core(x: np.ndarray, y: np.ndarray, cfg: TwoScaleConfig) -> float:
    # m prices give n = m-1 unit-lag returns; with these subsample counts the
    # noise-variance bias of the J scale cancels the K scale's exactly.
    m = len(x)
    n = m - 1
    K, J = cfg.K, cfg.J
    sk = _kernels.two_scale_sum(x, y, K) / K
    sj = _kernels.two_scale_sum(x, y, J) / J
    nbar_k = (n - K + 1) / K
    nbar_j = (n - J + 1) / J
    return sk - (nbar_k / nbar_j) * sj


def tsrv(prices, cfg: TwoScaleConfig) -> float:
    """Two-scale realized volatility of one log-price series.

    Returns the K-lag subsampled realized variance minus the noise-bias
    correction from the J-lag scale. The result may be negative for short,
    noisy series; no flooring is applied here.
    """
    x = np.asarray(prices, dtype=np.float64)
    if len(x) < cfg.K + 1:
        raise InsufficientDataError(
            f"need at least K+1={cfg.K + 1} prices, got {len(x)}"
        )
    return _two_scale_core(x, x, cfg)


def tscv(a_prices, b_prices, cfg: TwoScaleConfig) -> float:
    """Two-scale realized covariance of two synchronized log-price series.

    Both inputs must already be sampled on a common refresh grid
    (previous-tick prices). ``tscv(a, a)`` equals ``tsrv(a)`` exactly.
    """
    x = np.asarray(a_prices, dtype=np.float64)
    y = np.asarray(b_prices, dtype=np.float64)
    if len(x) != len(y):
        raise ValueError(f"length mismatch: {len(x)} vs {len(y)}")
    if len(x) < cfg.K + 1:
        raise InsufficientDataError(
            f"need at least K+1={cfg.K + 1} prices, got {len(x)}"
        )
    return _two_scale_core(x, y, cfg)


def tscv_polarized(a_prices, b_prices, cfg: TwoScaleConfig) -> float:
    """Covariance via polarization: (tsrv(a+b) - tsrv(a-b)) / 4."""
    x = np.asarray(a_prices, dtype=np.float64)
    y = np.asarray(b_prices, dtype=np.float64)
    if len(x) != len(y):
        raise ValueError(f"length mismatch: {len(x)} vs {len(y)}")
    return (tsrv(x + y, cfg) - tsrv(x - y, cfg)) / 4.0


def parzen_kernel(x: float) -> float:
    """Parzen weight: flat-top at 0, smoothly decaying to 0 at 1."""
    if x < 0:
        raise ValueError("x must be >= 0")
    if x <= 0.5:
        return 1.0 - 6.0 * x * x + 6.0 * x * x * x
    if x <= 1.0:
        return 2.0 * (1.0 - x) ** 3
    return 0.0


def realized_kernel(prices, H: int = 1) -> float:
    """Parzen realized kernel with bandwidth ``H``.

    gamma_0 + sum_{h=1..H} k((h-1)/H) (gamma_h + gamma_{-h}) over the
    series' unit-lag returns; k(0) = 1 keeps the first autocovariance at
    full weight.
    """
    x = np.asarray(prices, dtype=np.float64)
    if H < 1:
        raise ValueError("H must be a positive integer")
    if len(x) < H + 2:
        raise InsufficientDataError(f"need at least H+2={H + 2} prices, got {len(x)}")
    r = np.diff(x)
    total = _kernels.autocov_sum(r, r, 0)
    for h in range(1, H + 1):
        g = _kernels.autocov_sum(r, r, h)
        total += parzen_kernel((h - 1) / H) * 2.0 * g
    return float(total)


def _realized_kernel_cross(x: np.ndarray, y: np.ndarray, H: int) -> float:
    """Cross realized kernel by polarization of the univariate estimator."""
    return (realized_kernel(x + y, H) - realized_kernel(x - y, H)) / 4.0


def lowfreq_sample_cov(daily_closes, asset_ids=None) -> CovEstimate:
    """Sample covariance of close-to-close daily log-returns.

    ``daily_closes`` is (n_days, p) of log-prices. Returns a per-day
    covariance (window_days = 1), mean-subtracted, denominator n_returns - 1;
    at least 3 closing prices are required for a defined variance.
    """
    closes = np.asarray(daily_closes, dtype=np.float64)
    if closes.ndim == 1:
        closes = closes[:, None]
    n_days, p = closes.shape
    if n_days < 3:
        raise InsufficientDataError(
            f"need >= 3 daily closes (>= 2 returns), got {n_days}"
        )
    if asset_ids is None:
        asset_ids = tuple(f"A{i + 1}" for i in range(p))
    r = np.diff(closes, axis=0)
    r = r - r.mean(axis=0, keepdims=True)
    n_ret = r.shape[0]
    mat = r.T @ r / (n_ret - 1)
    mat = (mat + mat.T) / 2.0
    counts = np.full((p, p), n_ret, dtype=np.int64)
    est = CovEstimate(
        asset_ids=tuple(asset_ids),
        matrix=mat,
        method=Method.LOWFREQ_SAMPLE,
        pair_counts=counts,
        n_min=n_ret,
        window_days=1.0,
    )
    est.validate()
    return est


MIN_PAIR_OBS = 8


def _pair_task(si, sj):
    grid = pairwise_refresh(si, sj)
    n = grid.n_refresh
    if n < MIN_PAIR_OBS:
        return 0.0, n, f"only {n} pairwise refresh times"
    cfg = choose_two_scale(n)
    xa = sampled_log_prices(grid, si)
    xb = sampled_log_prices(grid, sj)
    return tscv(xa, xb, cfg), n, None


def estimate_matrix_pairwise(
    panel: TickPanel, window_days: float, workers: int = 1
) -> CovEstimate:
    """Integrated covariance matrix under the pairwise-refresh strategy.

    Diagonal entries are TSRV on each asset's own ticks; off-diagonal
    entries are TSCV on the pair's refresh grid with per-pair scale
    selection. The output is symmetric by construction but not necessarily
    positive semi-definite. Pairs with fewer than 8 refresh times are
    zero-filled and recorded in the rejection report instead of aborting the
    matrix.
    """
    p = panel.p
    ids = panel.asset_ids
    mat = np.zeros((p, p))
    counts = np.zeros((p, p), dtype=np.int64)
    rejections: list[tuple[str, str, str]] = []

    for i, s in enumerate(panel.series):
        counts[i, i] = len(s)
        if len(s) < MIN_PAIR_OBS:
            rejections.append((ids[i], ids[i], f"only {len(s)} ticks"))
            continue
        mat[i, i] = tsrv(s.log_prices, choose_two_scale(len(s)))

    pairs = [(i, j) for i in range(p) for j in range(i + 1, p)]

    def run(pair):
        i, j = pair
        si, sj = panel.series[i], panel.series[j]
        if len(si) == 0 or len(sj) == 0:
            empty = ids[i] if len(si) == 0 else ids[j]
            return i, j, 0.0, 0, f"asset {empty!r} has no ticks"
        value, n, reason = _pair_task(si, sj)
        return i, j, value, n, reason

    if workers > 1 and len(pairs) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run, pairs))
    else:
        results = [run(pair) for pair in pairs]

    for i, j, value, n, reason in results:
        mat[i, j] = mat[j, i] = value
        counts[i, j] = counts[j, i] = n
        if reason is not None:
            rejections.append((ids[i], ids[j], reason))

    if p == 1:
        n_min = int(counts[0, 0])
    else:
        n_min = int(counts[~np.eye(p, dtype=bool)].min())
    est = CovEstimate(
        asset_ids=tuple(ids),
        matrix=mat,
        method=Method.PAIRWISE_TSCV,
        pair_counts=counts,
        n_min=n_min,
        window_days=float(window_days),
        rejections=tuple(rejections),
    )
    est.validate()
    return est


def estimate_matrix_allrefresh(
    panel: TickPanel,
    window_days: float,
    method: str = "TSCV",
    kernel_h: int = 1,
    workers: int = 1,
) -> CovEstimate:
    """Integrated covariance matrix on the single all-refresh grid.

    ``method`` selects TSCV (two-scale on the common grid, TSRV diagonal) or
    RK (realized-kernel diagonal, cross entries by polarization of the
    kernel estimator).
    """
    if method not in ("TSCV", "RK"):
        raise ValueError(f"method must be 'TSCV' or 'RK', got {method!r}")
    p = panel.p
    ids = panel.asset_ids
    grid = all_refresh(panel)
    n = grid.n_refresh
    if n < MIN_PAIR_OBS:
        raise InsufficientDataError(f"only {n} all-refresh times (need >= 8)")
    sampled = np.stack(
        [sampled_log_prices(grid, s) for s in panel.series], axis=0
    )
    mat = np.zeros((p, p))
    if method == "TSCV":
        cfg = choose_two_scale(n)
        for i in range(p):
            mat[i, i] = tsrv(sampled[i], cfg)
        pairs = [(i, j) for i in range(p) for j in range(i + 1, p)]

        def run(pair):
            i, j = pair
            return i, j, tscv(sampled[i], sampled[j], cfg)

    else:
        for i in range(p):
            mat[i, i] = realized_kernel(sampled[i], kernel_h)
        pairs = [(i, j) for i in range(p) for j in range(i + 1, p)]

        def run(pair):
            i, j = pair
            return i, j, _realized_kernel_cross(sampled[i], sampled[j], kernel_h)

    if workers > 1 and len(pairs) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run, pairs))
    else:
        results = [run(pair) for pair in pairs]
    for i, j, value in results:
        mat[i, j] = mat[j, i] = value

    est = CovEstimate(
        asset_ids=tuple(ids),
        matrix=mat,
        method=Method.ALLREFRESH_TSCV if method == "TSCV" else Method.ALLREFRESH_RK,
        pair_counts=np.full((p, p), n, dtype=np.int64),
        n_min=n,
        window_days=float(window_days),
    )
    est.validate()
    return est


def synchronous_cov(
    log_prices: np.ndarray,
    window_days: float,
    asset_ids=None,
    method: Method = Method.LATENT_ORACLE,
    estimator: str = "rv",
) -> CovEstimate:
    """Covariance matrix of already-synchronous log-price rows (p, m).

    Used for the latent-price oracle, where every asset is observed on the
    same fine grid without noise. ``estimator='rv'`` (default) reads off the
    realized covariance, which on noise-free data is the quadratic
    covariation up to O(1/sqrt(m)) discretization error; ``'tscv'`` applies
    the two-scale estimator instead, which is only worthwhile when the
    inputs carry observation noise.
    """
    x = np.asarray(log_prices, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    p, m = x.shape
    if asset_ids is None:
        asset_ids = tuple(f"A{i + 1}" for i in range(p))
    if estimator == "rv":
        r = np.diff(x, axis=1)
        mat = r @ r.T
        mat = (mat + mat.T) / 2.0
    elif estimator == "tscv":
        cfg = choose_two_scale(m)
        mat = np.zeros((p, p))
        for i in range(p):
            mat[i, i] = tsrv(x[i], cfg)
            for j in range(i + 1, p):
                mat[i, j] = mat[j, i] = tscv(x[i], x[j], cfg)
    else:
        raise ValueError(f"estimator must be 'rv' or 'tscv', got {estimator!r}")
    est = CovEstimate(
        asset_ids=tuple(asset_ids),
        matrix=mat,
        method=method,
        pair_counts=np.full((p, p), m, dtype=np.int64),
        n_min=m,
        window_days=float(window_days),
    )
    est.validate()
    return est


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------

def save_cov_estimate(est: CovEstimate, prefix) -> None:
    """Write ``<prefix>.csv`` (matrix with asset-id header), a pair-count CSV
    and a ``<prefix>.meta.txt`` key/value sidecar."""
    prefix = str(prefix)
    with open(prefix + ".csv", "w") as fh:
        fh.write(",".join(est.asset_ids) + "\n")
        for row in est.matrix:
            fh.write(",".join(f"{v:.17g}" for v in row) + "\n")
    with open(prefix + ".pair_counts.csv", "w") as fh:
        fh.write(",".join(est.asset_ids) + "\n")
        for row in est.pair_counts:
            fh.write(",".join(str(int(v)) for v in row) + "\n")
    with open(prefix + ".meta.txt", "w") as fh:
        fh.write(f"method = {est.method.value}\n")
        fh.write(f"window_days = {est.window_days:.17g}\n")
        fh.write(f"n_min = {est.n_min}\n")
        fh.write(f"pair_counts_file = {prefix.rsplit('/', 1)[-1]}.pair_counts.csv\n")
        if est.projection:
            fh.write(f"projection = {est.projection}\n")
        fh.write(f"n_rejections = {len(est.rejections)}\n")
        for a, b, reason in est.rejections:
            fh.write(f"rejection = {a}|{b}|{reason}\n")


def load_cov_estimate(prefix) -> CovEstimate:
    """Read a CovEstimate written by :func:`save_cov_estimate`."""
    prefix = str(prefix)
    with open(prefix + ".csv") as fh:
        ids = tuple(fh.readline().strip().split(","))
        mat = np.array(
            [[float(v) for v in line.strip().split(",")] for line in fh if line.strip()]
        )
    meta: dict[str, str] = {}
    rejections = []
    with open(prefix + ".meta.txt") as fh:
        for line in fh:
            if "=" not in line:
                continue
            key, _, value = line.partition("=")
            key, value = key.strip(), value.strip()
            if key == "rejection":
                a, b, reason = value.split("|", 2)
                rejections.append((a, b, reason))
            else:
                meta[key] = value
    with open(prefix + ".pair_counts.csv") as fh:
        fh.readline()
        counts = np.array(
            [[int(v) for v in line.strip().split(",")] for line in fh if line.strip()],
            dtype=np.int64,
        )
    est = CovEstimate(
        asset_ids=ids,
        matrix=mat,
        method=Method(meta["method"]),
        pair_counts=counts,
        n_min=int(meta["n_min"]),
        window_days=float(meta["window_days"]),
        rejections=tuple(rejections),
        projection=meta.get("projection"),
    )
    est.validate()
    return est
