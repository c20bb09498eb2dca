import numpy as np
import pytest

from vastvol.exceptions import TickParseError, TickValidationError
from vastvol.tickdata import (
    TickPanel,
    TickSeries,
    concat_days,
    load_panel,
    slice_window,
    write_panel,
)


def write_rows(path, rows, header="asset_id,time_s,log_price"):
    with open(path, "w") as fh:
        fh.write(header + "\n")
        for row in rows:
            fh.write(",".join(str(v) for v in row) + "\n")


class TestLoadPanel:
    def test_groups_by_asset(self, tmp_path):
        f = tmp_path / "ticks.csv"
        write_rows(f, [("A", 1.0, 0.0), ("A", 2.0, 0.01), ("B", 1.5, 0.0)])
        panel = load_panel(f, window_length=10.0)
        assert panel.p == 2
        assert len(panel.by_id("A")) == 2
        assert len(panel.by_id("B")) == 1

    def test_rows_resorted(self, tmp_path):
        f = tmp_path / "ticks.csv"
        write_rows(f, [("A", 2.0, 0.5), ("A", 1.0, 0.0)])
        panel = load_panel(f, window_length=10.0)
        np.testing.assert_array_equal(panel.by_id("A").times, [1.0, 2.0])
        np.testing.assert_array_equal(panel.by_id("A").log_prices, [0.0, 0.5])

    def test_duplicate_timestamp_rejected(self, tmp_path):
        f = tmp_path / "ticks.csv"
        write_rows(f, [("A", 1.0, 0.0), ("A", 1.0, 0.1)])
        with pytest.raises(TickValidationError, match="duplicate"):
            load_panel(f, window_length=10.0)

    def test_empty_file_rejected(self, tmp_path):
        f = tmp_path / "ticks.csv"
        f.write_text("")
        with pytest.raises(TickValidationError):
            load_panel(f, window_length=10.0)

    def test_header_only_rejected(self, tmp_path):
        f = tmp_path / "ticks.csv"
        f.write_text("asset_id,time_s,log_price\n")
        with pytest.raises(TickValidationError, match="no tick rows"):
            load_panel(f, window_length=10.0)

    def test_malformed_row_reports_line(self, tmp_path):
        f = tmp_path / "ticks.csv"
        write_rows(f, [("A", 1.0, 0.0), ("A", "oops", 0.1)])
        with pytest.raises(TickParseError, match="line 3"):
            load_panel(f, window_length=10.0)

    def test_wrong_field_count(self, tmp_path):
        f = tmp_path / "ticks.csv"
        f.write_text("asset_id,time_s,log_price\nA,1.0\n")
        with pytest.raises(TickParseError, match="3 fields"):
            load_panel(f, window_length=10.0)

    def test_bad_header(self, tmp_path):
        f = tmp_path / "ticks.csv"
        f.write_text("a,b,c\nA,1.0,0.0\n")
        with pytest.raises(TickParseError, match="header"):
            load_panel(f, window_length=10.0)

    def test_nan_price_rejected(self, tmp_path):
        f = tmp_path / "ticks.csv"
        write_rows(f, [("A", 1.0, "nan")])
        with pytest.raises(TickValidationError, match="non-finite"):
            load_panel(f, window_length=10.0)

    def test_time_outside_window_rejected(self, tmp_path):
        f = tmp_path / "ticks.csv"
        write_rows(f, [("A", 11.0, 0.0)])
        with pytest.raises(TickValidationError, match="outside"):
            load_panel(f, window_length=10.0)


class TestRoundTrip:
    def test_write_load_identity(self, tmp_path):
        rng = np.random.default_rng(7)
        series = []
        for name in ("X", "Y", "Z"):
            n = int(rng.integers(3, 40))
            times = np.sort(rng.uniform(0, 100, size=n))
            prices = rng.standard_normal(n).cumsum() * 0.01
            series.append(TickSeries(name, times, prices))
        panel = TickPanel(100.0, tuple(series))
        f = tmp_path / "rt.csv"
        write_panel(panel, f)
        back = load_panel(f, window_length=100.0)
        assert back.asset_ids == panel.asset_ids
        for s0, s1 in zip(panel.series, back.series):
            np.testing.assert_allclose(s1.times, s0.times, rtol=1e-11)
            np.testing.assert_allclose(s1.log_prices, s0.log_prices, rtol=1e-11)

    def test_second_write_is_bitwise_stable(self, tmp_path):
        a = TickSeries("A", np.array([0.1234567890123, 2.0]), np.array([0.5, 0.25]))
        panel = TickPanel(5.0, (a,))
        f1, f2 = tmp_path / "a.csv", tmp_path / "b.csv"
        write_panel(panel, f1)
        write_panel(load_panel(f1, 5.0), f2)
        assert f1.read_bytes() == f2.read_bytes()


class TestSliceWindow:
    def test_closed_right_interval(self):
        s = TickSeries("A", np.array([1.0, 5.0, 9.0]), np.zeros(3))
        panel = TickPanel(10.0, (s,))
        out = slice_window(panel, 0.0, 5.0)
        np.testing.assert_array_equal(out.by_id("A").times, [1.0, 5.0])

    def test_empty_interval_rejected(self):
        s = TickSeries("A", np.array([1.0]), np.zeros(1))
        panel = TickPanel(10.0, (s,))
        with pytest.raises(ValueError):
            slice_window(panel, 4.0, 4.0)

    def test_rebased_times(self):
        s = TickSeries("A", np.array([1.0, 5.0, 9.0]), np.array([0.0, 1.0, 2.0]))
        panel = TickPanel(10.0, (s,))
        out = slice_window(panel, 5.0, 10.0)
        np.testing.assert_array_equal(out.by_id("A").times, [4.0])
        np.testing.assert_array_equal(out.by_id("A").log_prices, [2.0])

    def test_empty_assets_retained_and_flagged(self):
        a = TickSeries("A", np.array([1.0]), np.zeros(1))
        b = TickSeries("B", np.array([9.0]), np.zeros(1))
        panel = TickPanel(10.0, (a, b))
        out = slice_window(panel, 0.0, 5.0)
        assert out.p == 2
        assert out.empty_assets == ("B",)
        assert len(out.by_id("B")) == 0

    def test_preserves_order_and_count(self):
        rng = np.random.default_rng(3)
        times = np.sort(rng.uniform(0, 50, size=30))
        s = TickSeries("A", times, np.arange(30.0))
        panel = TickPanel(50.0, (s,))
        out = slice_window(panel, 10.0, 40.0)
        expected = times[(times > 10.0) & (times <= 40.0)]
        np.testing.assert_allclose(out.by_id("A").times, expected - 10.0)
        assert np.all(np.diff(out.by_id("A").log_prices) > 0)


class TestConcatDays:
    def test_offsets_times(self):
        a0 = TickSeries("A", np.array([1.0]), np.array([0.0]))
        a1 = TickSeries("A", np.array([2.0]), np.array([1.0]))
        merged = concat_days(
            [TickPanel(10.0, (a0,)), TickPanel(10.0, (a1,))], seconds_per_day=10.0
        )
        np.testing.assert_array_equal(merged.by_id("A").times, [1.0, 12.0])
        assert merged.window_length_seconds == 20.0

    def test_universe_mismatch_rejected(self):
        a = TickSeries("A", np.array([1.0]), np.array([0.0]))
        b = TickSeries("B", np.array([1.0]), np.array([0.0]))
        with pytest.raises(TickValidationError):
            concat_days(
                [TickPanel(10.0, (a,)), TickPanel(10.0, (b,))], seconds_per_day=10.0
            )
