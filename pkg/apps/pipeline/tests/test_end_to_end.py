"""完整流水线：ingest → render → train → encode → cluster → backtest → report。"""

from __future__ import annotations

import tempfile
from io import StringIO
from pathlib import Path

import numpy as np
import pandas as pd
from django.core.management import call_command
from django.test import SimpleTestCase

from apps.services.tests.fixtures import regime_market, write_price_csv

# 120 个交易日、窗口 20、持有/步长 10，从位置 59 开始回测：调仓位置 59, 69, ..., 109
START_POSITION = 59
REBALANCES = 6
# render.stride 5 时在位置 59 之前结束的训练窗口起点为 0, 5, ..., 35
TRAINING_IMAGES = 12 * 8


class PipelineEndToEndTests(SimpleTestCase):
    def setUp(self) -> None:
        self._tmp = tempfile.TemporaryDirectory()
        self.root = Path(self._tmp.name)
        self.market = regime_market(days=120)
        self.start = self.market["U0"].dates[START_POSITION].date()
        write_price_csv(self.root / "data.csv", self.market)
        self.report_dir = self.root / "report"
        self.config = self.root / "pipeline.yaml"
        self.config.write_text(
            "\n".join(
                [
                    "seed: 11",
                    f"paths.data_csv: {self.root / 'data.csv'}",
                    f"paths.prices: {self.root / 'artifacts' / 'prices.csv'}",
                    f"paths.chart_dir: {self.root / 'artifacts' / 'charts'}",
                    f"paths.checkpoint: {self.root / 'artifacts' / 'model.ckpt'}",
                    f"paths.embedding_store: {self.root / 'artifacts' / 'embeddings.csv'}",
                    f"paths.report_dir: {self.report_dir}",
                    "architecture.preset: desk",
                    "render.stride: 5",
                    "train.max_epochs: 5",
                    "train.batch_size: 32",
                    f"backtest.start_date: {self.start.isoformat()}",
                ]
            )
            + "\n",
            encoding="utf-8",
        )

    def tearDown(self) -> None:
        self._tmp.cleanup()

    def call(self, name: str, **options) -> str:
        stdout = StringIO()
        call_command(name, config=self.config, stdout=stdout, stderr=StringIO(), **options)
        return stdout.getvalue()

    def closes(self) -> pd.DataFrame:
        return pd.DataFrame({symbol: item.frame["close"] for symbol, item in self.market.items()})

    def assert_trades_match_prices(self, trades: pd.DataFrame) -> None:
        """每只持仓的复合收益等于持有期末/调仓日收盘价之比减一，期收益为其等权平均。"""

        closes = self.closes()
        dates = closes.index
        for rebalance_date, group in trades.groupby("rebalance_date"):
            position = dates.get_loc(pd.Timestamp(rebalance_date))
            expected = closes.iloc[position + 10][group["symbol"]] / closes.iloc[position][group["symbol"]] - 1.0
            np.testing.assert_allclose(group["compound_return"].to_numpy(), expected.to_numpy(), atol=1e-9)
            np.testing.assert_allclose(group["period_return"].to_numpy(), expected.mean(), atol=1e-9)

    def assert_equity_compounds(self, trades: pd.DataFrame) -> None:
        equity = pd.read_csv(self.report_dir / "equity.csv", parse_dates=["date"]).set_index("date")["value"]
        periods = trades.drop_duplicates("rebalance_date")
        expected = np.cumprod(1.0 + periods["period_return"].to_numpy())
        observed = equity.loc[pd.to_datetime(periods["holding_end"])].to_numpy()
        np.testing.assert_allclose(observed, expected, atol=1e-6)
        self.assertEqual(equity.iloc[0], 1.0)

    def assert_regimes_recovered(self) -> None:
        assignments = pd.read_csv(self.report_dir / "assignments.csv")
        self.assertEqual(assignments["rebalance_date"].nunique(), REBALANCES)
        for _, group in assignments.groupby("rebalance_date"):
            labels = dict(zip(group["symbol"], group["community_id"]))
            rising = {labels[f"U{number}"] for number in range(6)}
            flat = {labels[f"F{number}"] for number in range(6)}
            self.assertEqual(len(rising), 1)
            self.assertEqual(len(flat), 1)
            self.assertNotEqual(rising, flat)

    def assert_one_pick_per_regime(self, trades: pd.DataFrame) -> None:
        self.assertEqual(trades["rebalance_date"].nunique(), REBALANCES)
        for _, group in trades.groupby("rebalance_date"):
            self.assertEqual(sorted(symbol[0] for symbol in group["symbol"]), ["F", "U"])

    def test_chart_pipeline_recovers_planted_regimes(self) -> None:
        self.call("ingest")
        self.assertIn("charts written", self.call("render"))
        trained = self.call("train")
        self.assertIn("checkpoint written", trained)
        self.assertIn(f"images={TRAINING_IMAGES}", trained)
        self.assertIn("embeddings=72", self.call("encode"))
        self.assertIn(f"rebalances={REBALANCES}", self.call("cluster"))
        charts = self.root / "artifacts" / "charts"
        # 同组股票的 K 线图各不相同
        self.assertNotEqual((charts / "U0_20240101.png").read_bytes(), (charts / "U1_20240101.png").read_bytes())
        self.assert_regimes_recovered()

        summary = self.call("backtest", k2=2)
        report = self.call("report")

        self.assertIn(f"rebalances={REBALANCES} invested={REBALANCES}", summary)
        self.assertIn("daily_sharpe", report)
        trades = pd.read_csv(self.report_dir / "trades.csv")
        self.assert_one_pick_per_regime(trades)
        self.assert_trades_match_prices(trades)
        self.assert_equity_compounds(trades)
        for name in ("metrics.csv", "portfolios.csv", "assignments.csv", "notes.txt", "equity.svg", "pipeline.prom"):
            self.assertTrue((self.report_dir / name).exists(), name)

        # 产物新鲜时重复运行直接复用
        self.assertIn("charts reused", self.call("render"))
        self.assertIn("checkpoint reused", self.call("train"))
        self.assertIn("embeddings reused", self.call("encode"))

    def test_whole_universe_holding_matches_prices(self) -> None:
        self.call("ingest")
        self.call("encode", features="raw")
        self.call("backtest", k2=12)

        trades = pd.read_csv(self.report_dir / "trades.csv")
        # k2 等于股票池大小时无论聚类结果如何都持有全部 12 只
        self.assertEqual(trades.groupby("rebalance_date").size().tolist(), [12] * REBALANCES)
        self.assert_trades_match_prices(trades)
        self.assert_equity_compounds(trades)

    def test_raw_features_recover_planted_regimes(self) -> None:
        self.call("ingest")
        self.call("encode", features="raw")
        self.call("backtest", k2=2)
        first_metrics = (self.report_dir / "metrics.csv").read_bytes()

        self.assert_regimes_recovered()
        trades = pd.read_csv(self.report_dir / "trades.csv")
        self.assert_one_pick_per_regime(trades)
        self.assert_trades_match_prices(trades)
        self.assert_equity_compounds(trades)

        self.call("backtest", k2=2)
        self.assertEqual((self.report_dir / "metrics.csv").read_bytes(), first_metrics)
