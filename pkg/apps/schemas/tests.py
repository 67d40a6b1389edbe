from __future__ import annotations

import tempfile
from datetime import date
from pathlib import Path

from django.test import SimpleTestCase

from apps.schemas.config import (
    BacktestConfig,
    ClusterConfig,
    ConfigError,
    PipelineConfig,
    RenderConfig,
    load_pipeline_config,
    parse_override,
)


class PipelineConfigTests(SimpleTestCase):
    def setUp(self) -> None:
        self._tmp = tempfile.TemporaryDirectory()
        self.root = Path(self._tmp.name)

    def tearDown(self) -> None:
        self._tmp.cleanup()

    def _write(self, text: str) -> Path:
        path = self.root / "pipeline.yaml"
        path.write_text(text, encoding="utf-8")
        return path

    def test_defaults(self) -> None:
        config = load_pipeline_config()

        self.assertEqual((config.render.width, config.render.height), (224, 224))
        self.assertEqual(config.architecture.preset, "paper")
        self.assertEqual(
            (config.backtest.formation_window, config.backtest.holding_period, config.backtest.stride),
            (20, 10, 10),
        )
        self.assertEqual(config.backtest.lookback, 20)

    def test_flat_dotted_keys_and_overrides(self) -> None:
        path = self._write("train.batch_size: 32\nbacktest.k2: 7\nbacktest.start_date: 2020-01-02\n")

        config = load_pipeline_config(path, {"train.batch_size": 16, "backtest.stride": None})

        self.assertEqual(config.train.batch_size, 16)
        self.assertEqual(config.backtest.k2, 7)
        self.assertEqual(config.backtest.start_date, date(2020, 1, 2))
        self.assertEqual(config.backtest.stride, 10)

    def test_nested_mapping_is_accepted(self) -> None:
        path = self._write("render:\n  width: 64\n  height: 64\narchitecture:\n  preset: desk\n")

        config = load_pipeline_config(path)

        self.assertEqual(config.render.width, 64)
        self.assertEqual(config.architecture.input_size, 64)

    def test_desk_preset_sets_render_size(self) -> None:
        config = load_pipeline_config(overrides={"architecture.preset": "desk"})

        self.assertEqual((config.render.width, config.render.height), (64, 64))

    def test_render_size_must_match_preset(self) -> None:
        with self.assertRaises(ConfigError) as caught:
            load_pipeline_config(overrides={"architecture.preset": "desk", "render.width": 100})

        self.assertTrue(any("render.width" in message for message in caught.exception.messages))

    def test_field_errors_are_reported_by_path(self) -> None:
        path = self._write("train.batch_size: 0\nbacktest.unknown: 1\n")

        with self.assertRaises(ConfigError) as caught:
            load_pipeline_config(path)

        messages = caught.exception.messages
        self.assertTrue(any(message.startswith("train.batch_size") for message in messages))
        self.assertTrue(any(message.startswith("backtest.unknown") for message in messages))

    def test_missing_and_malformed_files(self) -> None:
        with self.assertRaises(ConfigError):
            load_pipeline_config(self.root / "absent.yaml")
        with self.assertRaises(ConfigError):
            load_pipeline_config(self._write("- just\n- a list\n"))
        with self.assertRaises(ConfigError):
            load_pipeline_config(self._write("train: [unclosed\n"))

    def test_shipped_config_loads(self) -> None:
        config = load_pipeline_config(Path(__file__).resolve().parents[2] / "config" / "pipeline.yaml")

        self.assertEqual(config.config_hash(), PipelineConfig().config_hash())

    def test_global_seed_propagates_to_training(self) -> None:
        config = load_pipeline_config(overrides={"seed": 9})
        explicit = load_pipeline_config(overrides={"seed": 9, "train.seed": 4})

        self.assertEqual(config.train.seed, 9)
        self.assertEqual(explicit.train.seed, 4)

    def test_config_hash_is_stable_and_sensitive(self) -> None:
        first = load_pipeline_config(overrides={"backtest.k2": 5})
        second = load_pipeline_config(overrides={"backtest.k2": 5})
        third = load_pipeline_config(overrides={"backtest.k2": 6})

        self.assertEqual(first.config_hash(), second.config_hash())
        self.assertNotEqual(first.config_hash(), third.config_hash())
        self.assertEqual(len(first.config_hash()), 64)

    def test_parse_override(self) -> None:
        self.assertEqual(parse_override("train.learning_rate=0.01"), ("train.learning_rate", 0.01))
        self.assertEqual(parse_override("backtest.paper_mode=true"), ("backtest.paper_mode", True))
        self.assertEqual(parse_override("paths.report_dir=out/x"), ("paths.report_dir", "out/x"))
        with self.assertRaises(ConfigError):
            parse_override("no-equals-sign")


class SectionValidationTests(SimpleTestCase):
    def test_backtest_protocol(self) -> None:
        with self.assertRaises(ValueError):
            BacktestConfig(holding_period=10, stride=5)
        with self.assertRaises(ValueError):
            BacktestConfig(start_date=date(2021, 1, 1), end_date=date(2020, 1, 1))
        with self.assertRaises(ValueError):
            BacktestConfig(formation_window=20, score_lookback=30)

        self.assertEqual(BacktestConfig(score_lookback=10).lookback, 10)

    def test_scoring_needs_two_returns(self) -> None:
        # 夏普打分至少需要 2 个日收益，即 3 个收盘价
        with self.assertRaises(ValueError):
            BacktestConfig(score_lookback=2)
        with self.assertRaises(ValueError):
            BacktestConfig(formation_window=2, holding_period=1, stride=1)
        with self.assertRaises(ConfigError) as caught:
            load_pipeline_config(None, {"backtest.score_lookback": 2})

        self.assertIn("backtest.score_lookback", str(caught.exception))
        self.assertEqual(BacktestConfig(formation_window=3, holding_period=1, stride=1, score_lookback=3).lookback, 3)

    def test_cluster_section(self) -> None:
        config = load_pipeline_config(None, {"seed": 9, "cluster.method": "kmeans", "cluster.n_clusters": 3})

        self.assertEqual(config.cluster, ClusterConfig(method="kmeans", n_clusters=3, seed=9))
        self.assertEqual(PipelineConfig().cluster.method, "modularity")
        with self.assertRaises(ConfigError):
            load_pipeline_config(None, {"cluster.method": "spectral"})
        with self.assertRaises(ConfigError):
            load_pipeline_config(None, {"cluster.n_clusters": 0})

    def test_render_colors(self) -> None:
        with self.assertRaises(ValueError):
            RenderConfig(up_color=(255, 255, 255))
        with self.assertRaises(ValueError):
            RenderConfig(up_color=(0, 0, 0), wick_color=(0, 0, 0))
        with self.assertRaises(ValueError):
            RenderConfig(down_color=(0, 300, 0))

    def test_frozen(self) -> None:
        config = PipelineConfig()

        with self.assertRaises(ValueError):
            config.seed = 3  # type: ignore[misc]
