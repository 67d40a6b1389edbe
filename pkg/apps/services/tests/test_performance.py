from __future__ import annotations

import math

import numpy as np
import pandas as pd
from django.test import SimpleTestCase
from hypothesis import given, settings
from hypothesis import strategies as st

from apps.services.market_data import TradingCalendar
from apps.services.performance import (
    EquityCurve,
    max_drawdown,
    metrics_frame,
    period_returns,
    report_metrics,
)
from apps.services.tests.fixtures import business_days


def _curve(values, dates=None) -> EquityCurve:
    index = pd.DatetimeIndex(dates) if dates is not None else business_days(len(values))
    return EquityCurve(pd.Series(np.asarray(values, dtype=float), index=index, name="value"))


class EquityCurveTests(SimpleTestCase):
    def test_rejects_invalid_curves(self) -> None:
        with self.assertRaises(ValueError):
            _curve([1.0, 0.0])
        with self.assertRaises(ValueError):
            _curve([1.0, 1.1], dates=["2024-01-03", "2024-01-02"])
        with self.assertRaises(ValueError):
            _curve([])

    def test_on_calendar_forward_fills(self) -> None:
        curve = EquityCurve.from_points([("2024-01-02", 1.0), ("2024-01-05", 1.2)])
        calendar = TradingCalendar(["2024-01-01", "2024-01-02", "2024-01-03", "2024-01-04", "2024-01-05", "2024-01-08"])

        aligned = curve.on_calendar(calendar)

        self.assertEqual(aligned.values.tolist(), [1.0, 1.0, 1.0, 1.2])
        self.assertEqual(aligned.values.index[0], pd.Timestamp("2024-01-02"))


class MetricTests(SimpleTestCase):
    def test_max_drawdown(self) -> None:
        self.assertAlmostEqual(max_drawdown(_curve([1.0, 1.2, 0.9, 1.1])), -0.25)
        self.assertEqual(max_drawdown(_curve([1.0, 1.1, 1.2])), 0.0)

    def test_max_drawdown_reference_curve(self) -> None:
        self.assertAlmostEqual(max_drawdown(_curve([100.0, 120.0, 60.0, 90.0])), -0.5, places=15)

    def test_max_drawdown_matches_running_peak_search(self) -> None:
        rng = np.random.default_rng(17)
        for _ in range(1000):
            size = int(rng.integers(2, 40))
            values = 100.0 * np.cumprod(1.0 + rng.normal(0.0, 0.05, size=size))
            expected = 0.0
            for i in range(size):
                if values[i] < values[: i + 1].max():
                    continue
                for j in range(i + 1, size):
                    expected = min(expected, (values[j] - values[i]) / values[i])

            self.assertAlmostEqual(max_drawdown(_curve(values)), expected, places=12)

    def test_monthly_and_yearly_returns(self) -> None:
        curve = _curve(
            [1.0, 1.1, 1.21, 1.1, 1.32],
            dates=["2024-01-02", "2024-01-31", "2024-02-15", "2024-02-29", "2025-01-10"],
        )

        monthly = period_returns(curve, "M")
        yearly = period_returns(curve, "Y")

        np.testing.assert_allclose(monthly.to_numpy(), [0.1, 0.0, 0.2])
        np.testing.assert_allclose(yearly.to_numpy(), [0.1, 0.2])

    def test_report_metrics(self) -> None:
        curve = _curve(
            [1.0, 1.1, 1.21, 1.1, 1.32],
            dates=["2024-01-02", "2024-01-31", "2024-02-15", "2024-02-29", "2025-01-10"],
        )

        metrics = report_metrics(curve)

        self.assertAlmostEqual(metrics.total_return, 0.32)
        self.assertAlmostEqual(metrics.max_drawdown, 1.1 / 1.21 - 1.0)
        self.assertAlmostEqual(metrics.mean_return_monthly, 12 * 0.1)
        self.assertAlmostEqual(metrics.mean_return_yearly, 0.15)
        self.assertEqual(metrics.win_years, 1.0)
        daily = curve.daily_returns()
        self.assertAlmostEqual(metrics.mean_return_daily, daily.mean() * 252)
        self.assertAlmostEqual(metrics.daily_sharpe, daily.mean() / daily.std(ddof=1) * math.sqrt(252))

    def test_constant_daily_growth_closed_form(self) -> None:
        # 504 个交易日每日 +0.1%，横跨 2024 与 2025 两个自然年
        curve = _curve(1.001 ** np.arange(505))

        metrics = report_metrics(curve)

        self.assertAlmostEqual(metrics.total_return, 1.001**504 - 1.0, places=9)
        self.assertAlmostEqual(metrics.mean_return_daily, 0.001 * 252, places=9)
        self.assertEqual(metrics.max_drawdown, 0.0)
        self.assertEqual(metrics.win_years, 1.0)
        # 日收益只有舍入误差级别的波动，按零波动处理
        self.assertIsNone(metrics.daily_sharpe)
        yearly = period_returns(curve, "Y")
        self.assertEqual(len(yearly), 2)
        self.assertAlmostEqual(float(np.prod(1.0 + yearly.to_numpy())) - 1.0, metrics.total_return, places=9)

    def test_daily_and_monthly_annualization_agree(self) -> None:
        for rate in (0.0005, 0.001, -0.0005):
            metrics = report_metrics(_curve((1.0 + rate) ** np.arange(505)))

            self.assertLess(abs(metrics.mean_return_monthly - metrics.mean_return_daily), 0.005, rate)

    def test_flat_curve_has_undefined_sharpe(self) -> None:
        metrics = report_metrics(_curve([1.0] * 10))

        self.assertIsNone(metrics.daily_sharpe)
        self.assertEqual(metrics.total_return, 0.0)
        self.assertEqual(metrics.max_drawdown, 0.0)
        self.assertEqual(metrics.win_years, 0.0)

    def test_losing_year_counts_against_win_years(self) -> None:
        curve = _curve([1.0, 0.9, 1.0], dates=["2023-06-01", "2023-12-29", "2024-06-03"])

        self.assertAlmostEqual(report_metrics(curve).win_years, 0.5)

    def test_metrics_frame(self) -> None:
        frame = metrics_frame(report_metrics(_curve([1.0] * 3)))

        self.assertEqual(
            frame["metric"].tolist(),
            [
                "total_return",
                "daily_sharpe",
                "max_drawdown",
                "mean_return_daily",
                "mean_return_monthly",
                "mean_return_yearly",
                "win_years",
            ],
        )
        self.assertTrue(pd.isna(frame["value"].iloc[1]))

    @settings(deadline=None, max_examples=50)
    @given(st.lists(st.floats(min_value=-0.2, max_value=0.2), min_size=1, max_size=60))
    def test_curve_identities(self, returns) -> None:
        values = np.cumprod(np.concatenate([[1.0], 1.0 + np.asarray(returns)]))
        curve = _curve(values)

        metrics = report_metrics(curve)

        self.assertAlmostEqual(metrics.total_return, float(np.prod(1.0 + np.asarray(returns)) - 1.0), places=9)
        self.assertLessEqual(metrics.max_drawdown, 0.0)
        self.assertGreater(metrics.max_drawdown, -1.0)
        self.assertTrue(0.0 <= metrics.win_years <= 1.0)
        compounded = float(np.prod(1.0 + period_returns(curve, "M").to_numpy()) - 1.0)
        self.assertAlmostEqual(compounded, metrics.total_return, places=9)
