from __future__ import annotations

import logging
import tempfile
from pathlib import Path

from django.test import SimpleTestCase

from apps.telemetry.logging import get_logger
from apps.telemetry.metrics import REGISTRY, export_textfile, mark_command, observe_epoch, observe_rebalance


class ContextLoggerTests(SimpleTestCase):
    def test_bound_context_is_appended(self) -> None:
        logger = get_logger("apps.telemetry.tests", command="train")

        with self.assertLogs("apps.telemetry.tests", level="INFO") as captured:
            logger.bind(symbol="AAA").info("train.epoch: epoch=1")

        self.assertEqual(captured.records[0].getMessage(), "train.epoch: epoch=1 [command=train symbol=AAA]")
        self.assertEqual(captured.records[0].symbol, "AAA")

    def test_bind_does_not_mutate_parent(self) -> None:
        parent = get_logger("apps.telemetry.tests")
        parent.bind(rebalance_date="2024-01-02")

        with self.assertLogs("apps.telemetry.tests", level="WARNING") as captured:
            parent.warning("plain")

        self.assertEqual(captured.records[0].getMessage(), "plain")
        self.assertEqual(captured.records[0].levelno, logging.WARNING)


class MetricsTests(SimpleTestCase):
    def test_counters_and_textfile(self) -> None:
        before = REGISTRY.get_sample_value(
            "pipeline_command_runs_total", {"command": "render", "status": "ok"}
        ) or 0.0

        mark_command("render", "ok")
        observe_epoch("desk", 0.125)
        observe_rebalance("invested", 3)

        self.assertEqual(
            REGISTRY.get_sample_value("pipeline_command_runs_total", {"command": "render", "status": "ok"}),
            before + 1.0,
        )
        self.assertEqual(REGISTRY.get_sample_value("autoencoder_epoch_loss", {"preset": "desk"}), 0.125)
        with tempfile.TemporaryDirectory() as tmp:
            path = export_textfile(Path(tmp) / "nested" / "pipeline.prom")
            text = path.read_text(encoding="utf-8")
        self.assertIn("pipeline_command_runs_total", text)
        self.assertIn("cluster_communities_bucket", text)
