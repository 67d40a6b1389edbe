from __future__ import annotations

import tempfile
from datetime import date
from pathlib import Path

import numpy as np
import pandas as pd
from django.test import SimpleTestCase
from hypothesis import given, settings
from hypothesis import strategies as st

from apps.services.market_data import (
    DataValidationError,
    EmptyDataError,
    TradingCalendar,
    daily_returns,
    extract_windows,
    load_csv,
    universe_at,
    write_csv,
)
from apps.services.tests.fixtures import business_days, geometric, series_from_closes, write_price_csv

VALID_ROW = "2024-01-02,AAA,10,11,9,10.5"


class LoadCsvTests(SimpleTestCase):
    def setUp(self) -> None:
        self._tmp = tempfile.TemporaryDirectory()
        self.root = Path(self._tmp.name)

    def tearDown(self) -> None:
        self._tmp.cleanup()

    def _write(self, *rows: str, header: str = "date,symbol,open,high,low,close") -> Path:
        path = self.root / "prices.csv"
        path.write_text("\n".join([header, *rows]) + "\n", encoding="utf-8")
        return path

    def test_rejects_invalid_rows_with_line_numbers(self) -> None:
        path = self._write(
            VALID_ROW,
            "2024-01-03,AAA,10,9,11,10",
            "2024-01-04,AAA,abc,11,9,10",
            "2024-13-01,AAA,10,11,9,10",
            VALID_ROW,
            "2024-01-05,AAA,0,11,9,10",
            "2024-01-08,AAA,10,12,9,11",
        )

        loaded = load_csv(path)

        self.assertEqual([item.line for item in loaded.diagnostics], [3, 4, 5, 6, 7])
        reasons = {item.line: item.reason for item in loaded.diagnostics}
        self.assertIn("low > high", reasons[3])
        self.assertIn("unparseable open", reasons[4])
        self.assertIn("unparseable date", reasons[5])
        self.assertIn("duplicate date 2024-01-02", reasons[6])
        self.assertIn("open must be strictly positive", reasons[7])
        self.assertTrue(str(loaded.diagnostics[0]).startswith(f"{path}:3: "))
        self.assertEqual(len(loaded.series["AAA"]), 2)
        self.assertEqual(len(loaded.calendar), 2)

    def test_all_rows_invalid_is_empty_data(self) -> None:
        path = self._write("2024-01-03,AAA,10,9,11,10")

        with self.assertRaises(EmptyDataError):
            load_csv(path)

    def test_missing_column(self) -> None:
        path = self._write("2024-01-02,AAA,10,11,9", header="date,symbol,open,high,low")

        with self.assertRaises(DataValidationError):
            load_csv(path)

    def test_missing_file(self) -> None:
        with self.assertRaises(FileNotFoundError):
            load_csv(self.root / "absent.csv")

    def test_off_calendar_rows_rejected(self) -> None:
        path = self._write(VALID_ROW, "2024-01-06,AAA,10,11,9,10")
        calendar = TradingCalendar(["2024-01-02", "2024-01-03"])

        loaded = load_csv(path, calendar)

        self.assertEqual([item.line for item in loaded.diagnostics], [3])
        self.assertIn("not in trading calendar", loaded.diagnostics[0].reason)

    def test_write_then_load_preserves_series(self) -> None:
        market = {
            "AAA": series_from_closes("AAA", geometric(15, 0.01)),
            "BBB": series_from_closes("BBB", [10.1, 10.3, 9.7, 9.9, 10.0]),
        }
        source = load_csv(write_price_csv(self.root / "in.csv", market))

        target = write_csv(source.series.values(), self.root / "out.csv")
        reloaded = load_csv(target)

        self.assertEqual(sorted(reloaded.series), ["AAA", "BBB"])
        for symbol in market:
            before, after = source.series[symbol], reloaded.series[symbol]
            self.assertTrue(after.dates.equals(before.dates))
            np.testing.assert_allclose(after.frame.to_numpy(), before.frame.to_numpy(), rtol=1e-15)


class WindowTests(SimpleTestCase):
    def test_windows_follow_stride(self) -> None:
        series = series_from_closes("AAA", geometric(30, 0.01))

        windows = extract_windows(series, window=20, stride=5)

        self.assertEqual([item.start_index for item in windows], [0, 5, 10])
        self.assertTrue(all(len(item) == 20 for item in windows))

    def test_short_series_has_no_windows(self) -> None:
        series = series_from_closes("AAA", geometric(10, 0.01))

        self.assertEqual(extract_windows(series, window=20, stride=1), [])

    def test_windows_crossing_calendar_gap_are_skipped(self) -> None:
        days = business_days(8)
        calendar = TradingCalendar(days)
        series = series_from_closes("AAA", geometric(7, 0.01), dates=days.delete(3))

        windows = extract_windows(series, window=3, stride=1, calendar=calendar)

        # 缺失第 4 个交易日，跨越它的窗口被丢弃
        self.assertEqual([item.start_date for item in windows], [days[0].date(), days[4].date(), days[5].date()])

    def test_universe_excludes_incomplete_windows(self) -> None:
        days = business_days(6)
        calendar = TradingCalendar(days)
        complete = series_from_closes("AAA", geometric(6, 0.01), dates=days)
        gapped = series_from_closes("BBB", geometric(5, 0.01), dates=days.delete(4))
        young = series_from_closes("CCC", geometric(2, 0.01), dates=days[4:])

        universe = universe_at({"AAA": complete, "BBB": gapped, "CCC": young}, calendar, days[5], 3)

        self.assertEqual(list(universe), ["AAA"])
        self.assertEqual(universe["AAA"].end_date, days[5].date())

    def test_daily_returns(self) -> None:
        series = series_from_closes("AAA", [100.0, 110.0, 99.0])

        returns = daily_returns(series)

        np.testing.assert_allclose(returns.to_numpy(), [0.1, -0.1])
        self.assertEqual(returns.index[0], series.dates[1])

    def test_daily_returns_needs_two_bars(self) -> None:
        with self.assertRaises(DataValidationError):
            daily_returns(series_from_closes("AAA", [100.0]))

    @settings(deadline=None, max_examples=40)
    @given(
        length=st.integers(min_value=1, max_value=60),
        window=st.integers(min_value=1, max_value=25),
        stride=st.integers(min_value=1, max_value=7),
    )
    def test_window_count(self, length: int, window: int, stride: int) -> None:
        series = series_from_closes("AAA", geometric(length, 0.001))

        windows = extract_windows(series, window, stride)

        expected = 0 if length < window else (length - window) // stride + 1
        self.assertEqual(len(windows), expected)
        for item in windows:
            self.assertTrue(item.frame.equals(series.frame.iloc[item.start_index: item.start_index + window]))


class CalendarTests(SimpleTestCase):
    def test_sorted_and_unique(self) -> None:
        calendar = TradingCalendar(["2024-01-03", "2024-01-02", "2024-01-03"])

        self.assertEqual(len(calendar), 2)
        self.assertEqual(calendar[0], pd.Timestamp("2024-01-02"))
        self.assertIn(date(2024, 1, 3), calendar)
        self.assertEqual(calendar.position("2024-01-03"), 1)
        with self.assertRaises(KeyError):
            calendar.position("2024-01-04")
