from __future__ import annotations

import tempfile
from pathlib import Path

import numpy as np
import pandas as pd
from django.test import SimpleTestCase

from apps.repositories.artifact_repository import (
    ArtifactRepository,
    Provenance,
    ReportLockedError,
    file_sha256,
    input_hashes,
    sidecar_path,
)
from apps.repositories.chart_repository import ChartDirectoryError, ChartRepository
from apps.repositories.embedding_repository import EmbeddingRepository, EmbeddingStoreError
from apps.repositories.result_repository import EQUITY, PLOT, CurveFormatError, ResultRepository


class _TempDirMixin:
    def setUp(self) -> None:
        self._tmp = tempfile.TemporaryDirectory()
        self.root = Path(self._tmp.name)

    def tearDown(self) -> None:
        self._tmp.cleanup()


class ArtifactRepositoryTests(_TempDirMixin, SimpleTestCase):
    def test_sidecar_round_trip_and_freshness(self) -> None:
        artifact = self.root / "model.ckpt"
        artifact.write_bytes(b"weights")
        repository = ArtifactRepository()
        provenance = Provenance(command="train", config_hash="abc", seed=1, inputs={"manifest": "00"})

        path = repository.write_provenance(artifact, provenance)

        self.assertEqual(path, self.root / "model.ckpt.provenance.json")
        self.assertEqual(repository.read_provenance(artifact), provenance)
        self.assertTrue(repository.is_fresh(artifact, provenance))
        self.assertFalse(repository.is_fresh(artifact, Provenance("train", "abd", 1, {"manifest": "00"})))

    def test_sidecar_is_byte_stable(self) -> None:
        artifact = self.root / "metrics.csv"
        provenance = Provenance(command="backtest", config_hash="h", seed=0, inputs={"b": "2", "a": "1"})
        repository = ArtifactRepository()

        first = repository.write_provenance(artifact, provenance).read_bytes()
        second = repository.write_provenance(artifact, provenance).read_bytes()

        self.assertEqual(first, second)

    def test_directory_artifacts_keep_sidecar_inside(self) -> None:
        directory = self.root / "charts"
        directory.mkdir()

        self.assertEqual(sidecar_path(directory), directory / "artifact.provenance.json")

    def test_unreadable_sidecar_is_stale(self) -> None:
        artifact = self.root / "store.csv"
        artifact.write_text("x", encoding="utf-8")
        sidecar_path(artifact).write_text("{not json", encoding="utf-8")

        self.assertIsNone(ArtifactRepository().read_provenance(artifact))

    def test_input_hashes(self) -> None:
        present = self.root / "prices.csv"
        present.write_bytes(b"abc")

        hashes = input_hashes({"prices": present, "missing": self.root / "nope.csv", "none": None})

        self.assertEqual(hashes["prices"], file_sha256(present))
        self.assertEqual(hashes["prices"], "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad")
        self.assertEqual(hashes["missing"], "")
        self.assertEqual(list(hashes), ["missing", "none", "prices"])

    def test_lock_is_exclusive(self) -> None:
        repository = ArtifactRepository()

        with repository.locked(self.root / "report"):
            with self.assertRaises(ReportLockedError):
                with repository.locked(self.root / "report"):
                    pass

        with repository.locked(self.root / "report"):
            pass


class EmbeddingRepositoryTests(_TempDirMixin, SimpleTestCase):
    def test_write_sorted_and_lookup(self) -> None:
        repository = EmbeddingRepository(self.root / "embeddings.csv")
        repository.write(
            [
                ("BBB", "2024-01-02", "m1", np.array([0.5, -1.25])),
                ("AAA", "2024-01-03", "m1", np.array([1.0 / 3.0, 2.0])),
                ("AAA", "2024-01-02", "m1", np.array([0.0, 1.0])),
            ]
        )

        frame = repository.read()
        lookup = repository.lookup()

        self.assertEqual(list(frame.columns), ["symbol", "window_start", "model_id", "v0", "v1"])
        self.assertEqual(frame["symbol"].tolist(), ["AAA", "AAA", "BBB"])
        self.assertEqual(lookup[("AAA", "2024-01-03")][0], "m1")
        self.assertEqual(lookup[("AAA", "2024-01-03")][1].tolist(), [1.0 / 3.0, 2.0])

    def test_rejects_mixed_dimensions(self) -> None:
        with self.assertRaises(EmbeddingStoreError):
            EmbeddingRepository(self.root / "e.csv").write(
                [("AAA", "2024-01-02", "m", np.zeros(2)), ("BBB", "2024-01-02", "m", np.zeros(3))]
            )

    def test_missing_store(self) -> None:
        with self.assertRaises(FileNotFoundError):
            EmbeddingRepository(self.root / "absent.csv").lookup()

    def test_missing_key_columns(self) -> None:
        path = self.root / "bad.csv"
        path.write_text("symbol,v0\nAAA,1.0\n", encoding="utf-8")

        with self.assertRaises(EmbeddingStoreError):
            EmbeddingRepository(path).read()


class ChartRepositoryTests(_TempDirMixin, SimpleTestCase):
    def test_missing_manifest(self) -> None:
        with self.assertRaises(ChartDirectoryError):
            ChartRepository(self.root / "charts").read_manifest()

    def test_unwritable_target(self) -> None:
        blocker = self.root / "file"
        blocker.write_text("x", encoding="utf-8")

        with self.assertRaises(ChartDirectoryError):
            ChartRepository(blocker / "charts").ensure_writable()


class ResultRepositoryTests(_TempDirMixin, SimpleTestCase):
    def test_equity_round_trip_and_plot(self) -> None:
        repository = ResultRepository(self.root / "report")
        values = pd.Series(
            [1.0, 1.05, 0.98],
            index=pd.DatetimeIndex(["2024-01-02", "2024-01-03", "2024-01-04"], name="date"),
            name="value",
        )

        repository.write_equity(values)
        loaded = repository.read_equity()
        plot = repository.write_plot(loaded, benchmark=values * 2.0, title="equity")
        again = repository.write_plot(loaded, benchmark=values * 2.0, title="equity")

        self.assertTrue((self.root / "report" / EQUITY).exists())
        self.assertEqual(loaded.tolist(), values.tolist())
        self.assertTrue(loaded.index.equals(values.index))
        self.assertEqual(plot, self.root / "report" / PLOT)
        self.assertIn(b"<svg", plot.read_bytes())
        self.assertEqual(plot.read_bytes(), again.read_bytes())

    def test_metrics_keep_undefined_values(self) -> None:
        repository = ResultRepository(self.root)
        repository.write_table(
            "metrics.csv", pd.DataFrame({"metric": ["total_return", "daily_sharpe"], "value": [0.1, None]})
        )

        self.assertEqual(repository.read_metrics(), {"total_return": 0.1, "daily_sharpe": None})

    def test_nested_tables(self) -> None:
        path = ResultRepository(self.root).write_table("graphs/2024-01-02.csv", pd.DataFrame({"a": [1]}))

        self.assertTrue(path.exists())

    def test_curve_requires_columns(self) -> None:
        path = self.root / "bench.csv"
        path.write_text("when,price\n2024-01-02,1.0\n", encoding="utf-8")

        with self.assertRaises(CurveFormatError):
            ResultRepository.read_curve(path)

    def test_curve_with_bad_values(self) -> None:
        path = self.root / "bench.csv"
        path.write_text("date,value\n2024-01-02,abc\n", encoding="utf-8")
        with self.assertRaises(CurveFormatError):
            ResultRepository.read_curve(path)

        path.write_text("date,value\n02/01/2024,1.0\n", encoding="utf-8")
        with self.assertRaises(CurveFormatError):
            ResultRepository.read_curve(path)
