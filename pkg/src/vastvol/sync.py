"""Refresh-time synchronization of asynchronous tick series.

Two schemes are provided. The pairwise scheme synchronizes one asset pair at
a time and retains far more observations per pair; the all-refresh scheme
waits at each step until every asset in the panel has traded, producing a
single common grid. Prices at refresh times are previous-tick measurements:
the last trade at or before each refresh time.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .exceptions import InsufficientDataError
from .tickdata import TickPanel, TickSeries


@dataclass(frozen=True)
class SyncGrid:
    """Refresh times plus, per asset, the previous-tick sample indices.

    The virtual origin v0 = 0 is not stored; ``refresh_times[i]`` is the
    (i+1)-th refresh time and ``sample_indices[asset][i]`` the index of that
    asset's last tick at or before it.
    """

    refresh_times: np.ndarray
    sample_indices: dict[str, np.ndarray]

    @property
    def n_refresh(self) -> int:
        return len(self.refresh_times)

    def validate(self, panel_series: dict[str, TickSeries]) -> None:
        v = self.refresh_times
        if np.any(np.diff(v) <= 0):
            raise AssertionError("refresh times not strictly increasing")
        for asset, idx in self.sample_indices.items():
            t = panel_series[asset].times
            if len(idx) != len(v):
                raise AssertionError("index/refresh length mismatch")
            if len(idx) and (np.any(t[idx] > v) or np.any(np.diff(idx) < 0)):
                raise AssertionError(f"invalid previous-tick indices for {asset}")


def pairwise_refresh(a: TickSeries, b: TickSeries) -> SyncGrid:
    """Pairwise refresh grid of two tick series.

    Starting from the virtual origin 0, each refresh time is the instant by
    which both assets have traded again; iteration stops when either asset
    has no tick after the last refresh time.
    """
    if len(a) == 0 or len(b) == 0:
        empty = a.asset_id if len(a) == 0 else b.asset_id
        raise InsufficientDataError(f"asset {empty!r} has no ticks")
    v, ia, ib = _kernels.pairwise_refresh_times(a.times, b.times)
    return SyncGrid(v, {a.asset_id: ia, b.asset_id: ib})


def all_refresh(panel: TickPanel) -> SyncGrid:
    """All-refresh grid over every asset of a panel.

    Same recursion as :func:`pairwise_refresh` with the maximum running over
    all assets, so each refresh interval waits for the slowest trader.
    """
    lengths = np.array([len(s) for s in panel.series], dtype=np.int64)
    for s in panel.series:
        if len(s) == 0:
            raise InsufficientDataError(f"asset {s.asset_id!r} has no ticks")
    if panel.p == 1:
        s = panel.series[0]
        mask = s.times > 0.0
        idx = np.nonzero(mask)[0]
        return SyncGrid(s.times[idx], {s.asset_id: idx})
    n_max = int(lengths.max())
    times = np.zeros((panel.p, n_max))
    for k, s in enumerate(panel.series):
        times[k, : len(s)] = s.times
    v, samples = _kernels.all_refresh_times(times, lengths)
    return SyncGrid(v, {s.asset_id: samples[k] for k, s in enumerate(panel.series)})


def sampled_log_prices(grid: SyncGrid, series: TickSeries) -> np.ndarray:
    """Previous-tick log-prices of one series on a refresh grid."""
    if series.asset_id not in grid.sample_indices:
        raise ValueError(f"series {series.asset_id!r} is not part of this grid")
    idx = grid.sample_indices[series.asset_id]
    if len(idx) == 0:
        return np.empty(0)
    return series.log_prices[idx]


def pair_counts(panel: TickPanel) -> tuple[np.ndarray, int]:
    """Matrix of pairwise refresh counts and their off-diagonal minimum.

    Diagonal entries hold each asset's own tick count. For a single-asset
    panel the minimum is that tick count.
    """
    p = panel.p
    counts = np.zeros((p, p), dtype=np.int64)
    for i, s in enumerate(panel.series):
        counts[i, i] = len(s)
    for i in range(p):
        for j in range(i + 1, p):
            grid = pairwise_refresh(panel.series[i], panel.series[j])
            counts[i, j] = counts[j, i] = grid.n_refresh
    if p == 1:
        return counts, int(counts[0, 0])
    off = counts[~np.eye(p, dtype=bool)]
    return counts, int(off.min())
