"""Tick data containers, validation, CSV ingest and windowing.

The on-disk format is a CSV with header ``asset_id,time_s,log_price``, one
row per tick, times in seconds from the window start. Multi-day datasets use
one file per day named ``ticks_D<index>.csv`` (zero-based day index).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .exceptions import TickParseError, TickValidationError

TICK_HEADER = ("asset_id", "time_s", "log_price")


@dataclass(frozen=True)
class TickSeries:
    """One asset's timestamped observed log-prices within a window.

    ``times`` are seconds since the window start, strictly increasing;
    ``log_prices`` are natural-log prices of the same length.
    """

    asset_id: str
    times: np.ndarray
    log_prices: np.ndarray

    def __len__(self) -> int:
        return len(self.times)

    def validate(self, window_length: float) -> None:
        if len(self.times) != len(self.log_prices):
            raise TickValidationError(f"{self.asset_id}: times/prices length mismatch")
        if len(self.times) < 1:
            raise TickValidationError(f"{self.asset_id}: empty series")
        if not np.all(np.isfinite(self.log_prices)):
            raise TickValidationError(f"{self.asset_id}: non-finite log-price")
        if not np.all(np.isfinite(self.times)):
            raise TickValidationError(f"{self.asset_id}: non-finite timestamp")
        dt = np.diff(self.times)
        if np.any(dt == 0):
            raise TickValidationError(f"{self.asset_id}: duplicate timestamp")
        if np.any(dt < 0):
            raise TickValidationError(f"{self.asset_id}: timestamps not increasing")
        if self.times[0] < 0 or self.times[-1] > window_length:
            raise TickValidationError(
                f"{self.asset_id}: timestamps outside [0, {window_length}]"
            )


@dataclass(frozen=True)
class TickPanel:
    """A window of tick data for several assets with distinct ids.

    ``empty_assets`` flags assets retained with zero ticks after windowing;
    freshly loaded panels never contain empty series.
    """

    window_length_seconds: float
    series: tuple[TickSeries, ...]
    empty_assets: tuple[str, ...] = field(default=())

    @property
    def p(self) -> int:
        return len(self.series)

    @property
    def asset_ids(self) -> list[str]:
        return [s.asset_id for s in self.series]

    def by_id(self, asset_id: str) -> TickSeries:
        for s in self.series:
            if s.asset_id == asset_id:
                return s
        raise KeyError(asset_id)

    def validate(self) -> None:
        if self.window_length_seconds <= 0:
            raise TickValidationError("window_length_seconds must be positive")
        if self.p < 1:
            raise TickValidationError("panel needs at least one asset")
        ids = self.asset_ids
        if len(set(ids)) != len(ids):
            raise TickValidationError("duplicate asset_id in panel")
        for s in self.series:
            if s.asset_id not in self.empty_assets:
                s.validate(self.window_length_seconds)


def load_panel(path, window_length: float) -> TickPanel:
    """Read a tick CSV and return a validated panel grouped by asset.

    Rows may appear in any order; each asset's ticks are sorted by time.
    Duplicate (asset, timestamp) rows, malformed rows and empty files are
    rejected.
    """
    times: dict[str, list[float]] = {}
    prices: dict[str, list[float]] = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise TickValidationError(f"{path}: empty file") from None
        if tuple(h.strip() for h in header) != TICK_HEADER:
            raise TickParseError(f"expected header {','.join(TICK_HEADER)}", 1)
        n_rows = 0
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 3:
                raise TickParseError(f"expected 3 fields, got {len(row)}", line_no)
            asset = row[0].strip()
            if not asset:
                raise TickParseError("empty asset_id", line_no)
            try:
                t = float(row[1])
                x = float(row[2])
            except ValueError as exc:
                raise TickParseError(str(exc), line_no) from None
            times.setdefault(asset, []).append(t)
            prices.setdefault(asset, []).append(x)
            n_rows += 1
    if n_rows == 0:
        raise TickValidationError(f"{path}: no tick rows")
    series = []
    for asset in times:
        t = np.asarray(times[asset], dtype=np.float64)
        x = np.asarray(prices[asset], dtype=np.float64)
        order = np.argsort(t, kind="stable")
        series.append(TickSeries(asset, t[order], x[order]))
    panel = TickPanel(float(window_length), tuple(series))
    panel.validate()
    return panel


def write_panel(panel: TickPanel, path) -> None:
    """Write a panel in the tick CSV format at 12 significant digits."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(TICK_HEADER)
        for s in panel.series:
            for t, x in zip(s.times, s.log_prices):
                writer.writerow([s.asset_id, f"{t:.12g}", f"{x:.12g}"])


def slice_window(panel: TickPanel, start: float, end: float) -> TickPanel:
    """Restrict a panel to ticks in ``(start, end]``, re-based to ``start``.

    Assets with no ticks in the slice are kept as empty series and flagged in
    ``empty_assets`` so downstream consumers can report them rather than
    silently shrink the universe.
    """
    if not (0 <= start < end <= panel.window_length_seconds):
        raise ValueError(
            f"need 0 <= start < end <= window_length, got ({start}, {end}]"
        )
    out = []
    empty = []
    for s in panel.series:
        lo = np.searchsorted(s.times, start, side="right")
        hi = np.searchsorted(s.times, end, side="right")
        if hi == lo:
            empty.append(s.asset_id)
            out.append(
                TickSeries(s.asset_id, np.empty(0), np.empty(0))
            )
        else:
            out.append(
                TickSeries(s.asset_id, s.times[lo:hi] - start, s.log_prices[lo:hi].copy())
            )
    return TickPanel(end - start, tuple(out), tuple(empty))


def concat_days(panels: list[TickPanel], seconds_per_day: float) -> TickPanel:
    """Merge consecutive daily panels into one window, offsetting times by day.

    Used for multi-day estimation windows. All panels must share the asset
    universe.
    """
    if not panels:
        raise ValueError("no panels to concatenate")
    ids = panels[0].asset_ids
    for pnl in panels[1:]:
        if pnl.asset_ids != ids:
            raise TickValidationError("panels have differing asset universes")
    series = []
    empty = []
    for k, asset in enumerate(ids):
        ts = []
        xs = []
        for d, pnl in enumerate(panels):
            s = pnl.series[k]
            if len(s) > 0:
                ts.append(s.times + d * seconds_per_day)
                xs.append(s.log_prices)
        if ts:
            series.append(TickSeries(asset, np.concatenate(ts), np.concatenate(xs)))
        else:
            series.append(TickSeries(asset, np.empty(0), np.empty(0)))
            empty.append(asset)
    return TickPanel(len(panels) * seconds_per_day, tuple(series), tuple(empty))
