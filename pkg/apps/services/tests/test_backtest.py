from __future__ import annotations

from datetime import date
from typing import Dict, List, Mapping

import numpy as np
import pandas as pd
from django.test import SimpleTestCase

from apps.schemas.config import BacktestConfig, ClusterConfig
from apps.services.autoencoder.inference import Embedding
from apps.services.backtest import InsufficientUniverseError, rebalance_schedule, run, trades_frame
from apps.services.market_data import DataValidationError, OhlcSeries, PriceWindow, TradingCalendar
from apps.services.portfolio import sharpe_ratio
from apps.services.tests.fixtures import business_days, series_from_closes

DAYS = business_days(10)
CLOSES = {
    "AAA": [100.0, 101.0, 103.0, 104.0, 106.0, 107.0, 109.0, 110.0, 112.0, 113.0],
    "BBB": [100.0, 99.0, 98.5, 97.0, 96.5, 95.0, 94.5, 93.0, 92.5, 91.0],
    "CCC": [100.0, 102.0, 99.0, 103.0, 98.0, 104.0, 97.0, 105.0, 96.0, 106.0],
}
SMALL = BacktestConfig(formation_window=3, holding_period=2, stride=2, k2=1)


def _market(closes: Mapping[str, List[float]] = CLOSES) -> Dict[str, OhlcSeries]:
    return {symbol: series_from_closes(symbol, values, dates=DAYS[: len(values)]) for symbol, values in closes.items()}


class OrthogonalEmbedder:
    """每只股票一个正交基向量，相似度图没有边；记录每次调用的窗口。"""

    def __init__(self, symbols: List[str]) -> None:
        self.axes = {symbol: index for index, symbol in enumerate(sorted(symbols))}
        self.calls: List[tuple[date, Dict[str, PriceWindow]]] = []

    def __call__(self, windows: Mapping[str, PriceWindow], rebalance_date: date) -> List[Embedding]:
        self.calls.append((rebalance_date, dict(windows)))
        embeddings = []
        for symbol in sorted(windows):
            vector = np.zeros(len(self.axes))
            vector[self.axes[symbol]] = 1.0
            embeddings.append(Embedding(symbol, windows[symbol].start_date, vector, "stub"))
        return embeddings


class DroppingEmbedder(OrthogonalEmbedder):
    """像原始收益特征那样静默跳过部分股票。"""

    def __init__(self, symbols: List[str], dropped: str) -> None:
        super().__init__(symbols)
        self.dropped = dropped

    def __call__(self, windows: Mapping[str, PriceWindow], rebalance_date: date) -> List[Embedding]:
        return [item for item in super().__call__(windows, rebalance_date) if item.symbol != self.dropped]


class ScheduleTests(SimpleTestCase):
    def test_positions_respect_window_and_holding(self) -> None:
        plans = rebalance_schedule(TradingCalendar(DAYS), SMALL)

        self.assertEqual([plan.position for plan in plans], [2, 4, 6])
        self.assertEqual(plans[0].holding_dates, [DAYS[3].date(), DAYS[4].date()])

    def test_start_and_end_dates(self) -> None:
        cfg = BacktestConfig(
            formation_window=3, holding_period=2, stride=2, k2=1, start_date=DAYS[3].date(), end_date=DAYS[7].date()
        )

        plans = rebalance_schedule(TradingCalendar(DAYS), cfg)

        self.assertEqual([plan.position for plan in plans], [3, 5])


class RunTests(SimpleTestCase):
    def _oracle(self, closes: Mapping[str, List[float]]) -> List[tuple[str, float]]:
        """k2 = 1 且没有边：直接选窗口夏普最高的股票，持有 2 天。"""

        picks = []
        for position in (2, 4, 6):
            best, best_key = "", None
            for symbol in sorted(closes):
                window = np.asarray(closes[symbol][position - 2: position + 1])
                sharpe = sharpe_ratio(window[1:] / window[:-1] - 1.0)
                key = (sharpe is None, -(sharpe or 0.0), symbol)
                if best_key is None or key < best_key:
                    best, best_key = symbol, key
            values = closes[best]
            picks.append((best, values[position + 2] / values[position] - 1.0))
        return picks

    def test_single_pick_matches_hand_trace(self) -> None:
        embedder = OrthogonalEmbedder(list(CLOSES))

        report = run(_market(), embedder, SMALL)

        oracle = self._oracle(CLOSES)
        self.assertEqual([period.rebalance_date for period in report.periods], [DAYS[p].date() for p in (2, 4, 6)])
        self.assertEqual([period.portfolio.symbols for period in report.periods], [[symbol] for symbol, _ in oracle])
        np.testing.assert_allclose(report.period_returns, [value for _, value in oracle], atol=1e-12)
        expected_end = float(np.prod([1.0 + value for _, value in oracle]))
        self.assertAlmostEqual(report.curve.end, expected_end, places=12)
        self.assertAlmostEqual(report.metrics.total_return, expected_end - 1.0, places=12)

    def test_equity_curve_marks_holdings_daily(self) -> None:
        report = run(_market(), OrthogonalEmbedder(list(CLOSES)), SMALL)
        values = report.curve.values

        self.assertEqual(values.index[0], DAYS[2])
        self.assertEqual(values.iloc[0], 1.0)
        first = report.periods[0]
        symbol = first.portfolio.symbols[0]
        closes = CLOSES[symbol]
        self.assertAlmostEqual(values[DAYS[3]], closes[3] / closes[2])
        self.assertAlmostEqual(values[DAYS[4]], 1.0 + first.period_return)
        self.assertEqual(values.index[-1], DAYS[8])
        self.assertNotIn(DAYS[9], values.index)

    def test_embedder_only_sees_formation_windows(self) -> None:
        embedder = OrthogonalEmbedder(list(CLOSES))

        run(_market(), embedder, SMALL)

        self.assertEqual(len(embedder.calls), 3)
        for rebalance_date, windows in embedder.calls:
            for window in windows.values():
                self.assertEqual(window.end_date, rebalance_date)
                self.assertEqual(len(window), 3)

    def test_future_prices_do_not_change_past_decisions(self) -> None:
        baseline = run(_market(), OrthogonalEmbedder(list(CLOSES)), SMALL)
        rng = np.random.default_rng(1)
        shocked = {
            symbol: values[:5] + list(values[4] * np.exp(rng.normal(0.0, 0.2, size=5)))
            for symbol, values in CLOSES.items()
        }

        altered = run(_market(shocked), OrthogonalEmbedder(list(CLOSES)), SMALL)

        # 截至第 2 个调仓日（第 5 个交易日）的信息完全相同
        for before, after in zip(baseline.periods[:2], altered.periods[:2]):
            self.assertEqual(before.portfolio, after.portfolio)
            self.assertEqual(before.assignment, after.assignment)
        self.assertEqual(baseline.periods[0].period_return, altered.periods[0].period_return)

    def test_thin_universe_raises_or_skips(self) -> None:
        market = _market()
        market["CCC"] = series_from_closes("CCC", CLOSES["CCC"][2:], dates=DAYS[2:])
        cfg = SMALL.model_copy(update={"k2": 3})

        with self.assertRaises(InsufficientUniverseError) as caught:
            run(market, OrthogonalEmbedder(list(CLOSES)), cfg, calendar=TradingCalendar(DAYS))
        self.assertEqual(caught.exception.available, 2)

        skipping = cfg.model_copy(update={"skip_thin_dates": True})
        report = run(market, OrthogonalEmbedder(list(CLOSES)), skipping, calendar=TradingCalendar(DAYS))

        self.assertTrue(report.periods[0].skipped)
        self.assertIsNone(report.periods[0].portfolio)
        self.assertEqual(report.periods[0].period_return, 0.0)
        self.assertEqual(report.curve.values[DAYS[4]], 1.0)
        self.assertEqual(report.periods[1].portfolio.symbols, ["AAA", "BBB", "CCC"])

    def test_skip_thin_dates_covers_symbols_dropped_by_embedder(self) -> None:
        cfg = BacktestConfig(formation_window=3, holding_period=2, stride=2, k2=3)
        embedder = DroppingEmbedder(list(CLOSES), dropped="CCC")

        with self.assertRaises(InsufficientUniverseError) as caught:
            run(_market(), embedder, cfg)
        self.assertEqual(caught.exception.available, 2)

        report = run(_market(), embedder, cfg.model_copy(update={"skip_thin_dates": True}))

        self.assertTrue(all(period.skipped for period in report.periods))
        self.assertEqual(report.curve.end, 1.0)

    def test_delisted_holding_keeps_last_close(self) -> None:
        market = {
            "AAA": series_from_closes("AAA", [10.0, 11.0, 12.0, 15.0], dates=DAYS[:4]),
            "BBB": series_from_closes("BBB", CLOSES["BBB"], dates=DAYS),
        }
        cfg = BacktestConfig(formation_window=3, holding_period=2, stride=2, k2=2, skip_thin_dates=True)

        report = run(market, OrthogonalEmbedder(["AAA", "BBB"]), cfg)

        first = report.periods[0]
        self.assertEqual(first.portfolio.symbols, ["AAA", "BBB"])
        self.assertAlmostEqual(first.holding_returns["AAA"], 15.0 / 12.0 - 1.0)
        self.assertAlmostEqual(first.holding_returns["BBB"], 96.5 / 98.5 - 1.0)
        self.assertTrue(all(period.skipped for period in report.periods[1:]))

    def test_single_stock_universe_skips_graph(self) -> None:
        market = {"AAA": series_from_closes("AAA", CLOSES["AAA"], dates=DAYS)}
        embedder = OrthogonalEmbedder(["AAA"])

        report = run(market, embedder, SMALL)

        self.assertEqual(embedder.calls, [])
        self.assertEqual([period.portfolio.symbols for period in report.periods], [["AAA"]] * 3)
        self.assertAlmostEqual(report.curve.end, CLOSES["AAA"][8] / CLOSES["AAA"][2])

    def test_too_short_history(self) -> None:
        market = {"AAA": series_from_closes("AAA", CLOSES["AAA"][:4], dates=DAYS[:4])}

        with self.assertRaises(DataValidationError):
            run(market, OrthogonalEmbedder(["AAA"]), SMALL)

    def test_trades_frame(self) -> None:
        report = run(_market(), OrthogonalEmbedder(list(CLOSES)), SMALL)

        frame = trades_frame(report.periods)

        self.assertEqual(len(frame), 3)
        self.assertEqual(frame["rebalance_date"].tolist(), [DAYS[p].date().isoformat() for p in (2, 4, 6)])
        self.assertTrue((frame["weight"] == 1.0).all())
        self.assertTrue(isinstance(frame, pd.DataFrame))


class KMeansBacktestTests(SimpleTestCase):
    def test_seeded_kmeans_is_reproducible(self) -> None:
        clustering = ClusterConfig(method="kmeans", n_clusters=2, seed=3)

        first = run(_market(), OrthogonalEmbedder(list(CLOSES)), SMALL, clustering=clustering)
        second = run(_market(), OrthogonalEmbedder(list(CLOSES)), SMALL, clustering=clustering)

        self.assertEqual([period.assignment for period in first.periods], [period.assignment for period in second.periods])
        self.assertTrue(trades_frame(first.periods).equals(trades_frame(second.periods)))
        self.assertEqual({period.assignment.community_count for period in first.periods}, {2})
        self.assertTrue(any("k-means" in note for note in first.notes))

    def test_modularity_is_the_default(self) -> None:
        report = run(_market(), OrthogonalEmbedder(list(CLOSES)), SMALL)

        # 正交嵌入没有边，贪心模块度不做任何合并
        self.assertEqual({period.assignment.community_count for period in report.periods}, {3})
        self.assertFalse(any("k-means" in note for note in report.notes))
