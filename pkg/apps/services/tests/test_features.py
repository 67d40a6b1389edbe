from __future__ import annotations

import tempfile
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase

from apps.repositories.embedding_repository import EmbeddingRepository
from apps.schemas.config import RenderConfig, TrainConfig
from apps.services.autoencoder import CaeArchitecture, initialize_checkpoint
from apps.services.features import (
    RAW_MODEL_ID,
    ChartEmbedder,
    MissingEmbeddingError,
    RawFeatureEmbedder,
    StoredEmbedder,
    raw_window_features,
)
from apps.services.tests.fixtures import geometric, series_from_closes, window_of


def _windows():
    return {
        "AAA": window_of(series_from_closes("AAA", [100.0, 101.0, 100.5, 102.0, 103.0])),
        "BBB": window_of(series_from_closes("BBB", [50.0, 49.0, 49.5, 48.0, 47.0])),
    }


class RawFeatureTests(SimpleTestCase):
    def test_standardized_returns(self) -> None:
        vector = raw_window_features(_windows()["AAA"])

        self.assertEqual(vector.shape, (4,))
        self.assertAlmostEqual(float(vector.mean()), 0.0)
        self.assertAlmostEqual(float(vector.std()), 1.0)

    def test_flat_window_is_skipped(self) -> None:
        windows = _windows()
        windows["CCC"] = window_of(series_from_closes("CCC", geometric(5, 0.0)))

        embeddings = RawFeatureEmbedder()(windows, windows["AAA"].end_date)

        self.assertEqual([item.symbol for item in embeddings], ["AAA", "BBB"])
        self.assertEqual({item.model_id for item in embeddings}, {RAW_MODEL_ID})


class StoredEmbedderTests(SimpleTestCase):
    def setUp(self) -> None:
        self._tmp = tempfile.TemporaryDirectory()
        self.repository = EmbeddingRepository(Path(self._tmp.name) / "embeddings.csv")
        start = _windows()["AAA"].start_date.isoformat()
        self.repository.write([("AAA", start, "m1", np.array([1.0, 0.0]))])

    def tearDown(self) -> None:
        self._tmp.cleanup()

    def test_strict_store_reports_missing_windows(self) -> None:
        windows = _windows()

        with self.assertRaises(MissingEmbeddingError) as caught:
            StoredEmbedder(self.repository)(windows, windows["AAA"].end_date)

        self.assertIn("BBB@", str(caught.exception))

    def test_lenient_store_skips_missing_windows(self) -> None:
        windows = _windows()

        embeddings = StoredEmbedder(self.repository, strict=False)(windows, windows["AAA"].end_date)

        self.assertEqual([item.symbol for item in embeddings], ["AAA"])
        self.assertEqual(embeddings[0].vector.tolist(), [1.0, 0.0])

    def test_model_id_filter(self) -> None:
        windows = {"AAA": _windows()["AAA"]}

        with self.assertRaises(MissingEmbeddingError):
            StoredEmbedder(self.repository, model_id="other")(windows, windows["AAA"].end_date)


class ChartEmbedderTests(SimpleTestCase):
    def test_renders_and_encodes_in_symbol_order(self) -> None:
        checkpoint = initialize_checkpoint(CaeArchitecture.desk(), TrainConfig(seed=2))
        embedder = ChartEmbedder(checkpoint, RenderConfig(width=64, height=64))
        windows = _windows()

        embeddings = embedder({"BBB": windows["BBB"], "AAA": windows["AAA"]}, windows["AAA"].end_date)

        self.assertEqual([item.symbol for item in embeddings], ["AAA", "BBB"])
        self.assertEqual(embeddings[0].vector.shape, (64,))
        self.assertEqual(embeddings[0].model_id, checkpoint.model_id)
