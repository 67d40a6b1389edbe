"""命令层调用的流水线编排：读写产物、缓存判定与溯源 sidecar。"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from apps.repositories.artifact_repository import ArtifactRepository, Provenance, input_hashes
from apps.repositories.chart_repository import ChartRepository, ManifestRow
from apps.repositories.checkpoint_repository import Checkpoint, CheckpointRepository
from apps.repositories.embedding_repository import EmbeddingRepository
from apps.repositories.result_repository import (
    ASSIGNMENTS,
    EQUITY,
    GRAPHS,
    METRICS,
    PORTFOLIOS,
    TRADES,
    ResultRepository,
)
from apps.schemas.config import ConfigError, PipelineConfig
from apps.services import backtest as backtest_service
from apps.services.autoencoder.architecture import CaeArchitecture
from apps.services.autoencoder.training import TrainResult, train
from apps.services.chart_render import render_universe
from apps.services.features import ChartEmbedder, RawFeatureEmbedder, StoredEmbedder
from apps.services.graph_cluster import ClusterAssignment, assignments_frame, partition
from apps.services.market_data import LoadResult, TradingCalendar, extract_windows, load_csv, universe_at, write_csv
from apps.services.performance import metrics_frame
from apps.services.portfolio import portfolios_frame
from apps.telemetry.logging import get_logger
from apps.telemetry.metrics import EMBEDDINGS_WRITTEN

logger = get_logger(__name__)
_artifacts = ArtifactRepository()


class MissingArtifactError(FileNotFoundError):
    """上游产物缺失，producer 为应当先运行的命令。"""

    def __init__(self, path: Path, producer: str) -> None:
        self.path = Path(path)
        self.producer = producer
        super().__init__(f"{path} 不存在，请先运行 `{producer}`")


@dataclass(frozen=True)
class StepResult:
    artifact: Path
    reused: bool
    detail: str = ""


def _provenance(config: PipelineConfig, command: str, inputs: Dict[str, Optional[Path]]) -> Provenance:
    return Provenance(command=command, config_hash=config.config_hash(), seed=config.seed, inputs=input_hashes(inputs))


def _require(path: Path, producer: str) -> Path:
    if not Path(path).exists():
        raise MissingArtifactError(path, producer)
    return Path(path)


def ingest(config: PipelineConfig) -> Tuple[LoadResult, Path]:
    loaded = load_csv(config.paths.data_csv)
    target = write_csv(loaded.series.values(), config.paths.prices)
    _artifacts.write_provenance(target, _provenance(config, "ingest", {"data_csv": config.paths.data_csv}))
    return loaded, target


def load_prices(config: PipelineConfig) -> LoadResult:
    return load_csv(_require(config.paths.prices, "ingest"))


def render(config: PipelineConfig, *, force: bool = False, workers: int = 1) -> StepResult:
    prices = _require(config.paths.prices, "ingest")
    chart_dir = config.paths.chart_dir
    expected = _provenance(config, "render", {"prices": prices})
    if not force and _artifacts.is_fresh(chart_dir / "manifest.csv", expected):
        return StepResult(chart_dir, reused=True)
    loaded = load_csv(prices)
    windows = [
        window
        for item in loaded
        for window in extract_windows(item, config.backtest.formation_window, config.render.stride, loaded.calendar)
    ]
    rows = render_universe(windows, config.render, chart_dir, workers=workers)
    _artifacts.write_provenance(chart_dir / "manifest.csv", expected)
    return StepResult(chart_dir, reused=False, detail=f"charts={len(rows)}")


def training_rows(config: PipelineConfig, rows: Sequence[ManifestRow], calendar: TradingCalendar) -> List[ManifestRow]:
    """只保留在截止日之前结束的窗口；paper_mode 使用全部窗口。

    截止日为 backtest.start_date，未设置时取首个调仓日。没有可用窗口时抛出 ConfigError。
    """

    if config.backtest.paper_mode:
        return list(rows)
    cutoff = config.backtest.start_date
    if cutoff is None:
        schedule = backtest_service.rebalance_schedule(calendar, config.backtest)
        cutoff = schedule[0].rebalance_date if schedule else None
    window = config.backtest.formation_window
    selected = []
    if cutoff is not None:
        for row in rows:
            end_position = calendar.position(row.start_date) + window - 1
            if end_position < len(calendar) and calendar[end_position].date() < cutoff:
                selected.append(row)
    if not selected:
        raise ConfigError(
            [f"backtest.start_date: 截止日 {cutoff} 之前没有完整的训练窗口，请设置更晚的 backtest.start_date 或使用 --paper-mode"]
        )
    logger.info(f"pipeline.training_rows: cutoff={cutoff} selected={len(selected)} total={len(rows)}")
    return selected


def train_model(config: PipelineConfig, *, force: bool = False, epochs: Optional[int] = None) -> StepResult:
    manifest = _require(config.paths.chart_dir / "manifest.csv", "render")
    checkpoint_path = config.paths.checkpoint
    expected = _provenance(config, "train", {"manifest": manifest})
    if not force and epochs is None and _artifacts.is_fresh(checkpoint_path, expected):
        return StepResult(checkpoint_path, reused=True)

    rows = ChartRepository(config.paths.chart_dir).read_manifest()
    selected = training_rows(config, rows, load_prices(config).calendar)
    architecture = CaeArchitecture.from_preset(config.architecture.preset)
    result: TrainResult = train(selected, architecture, config.train, config_hash=config.config_hash(), epochs=epochs)
    CheckpointRepository(checkpoint_path).save(result.checkpoint)
    _artifacts.write_provenance(checkpoint_path, expected)
    final = result.log[-1]
    return StepResult(
        checkpoint_path,
        reused=False,
        detail=f"images={len(selected)} epochs={len(result.log)} loss={final.loss:.6g} model_id={result.checkpoint.model_id}",
    )


def load_checkpoint(config: PipelineConfig) -> Checkpoint:
    return CheckpointRepository(_require(config.paths.checkpoint, "train")).load()


def encode_store(config: PipelineConfig, *, features: str = "cae", force: bool = False) -> StepResult:
    """为每个调仓日的可投资窗口写出嵌入库。"""

    prices = _require(config.paths.prices, "ingest")
    inputs: Dict[str, Optional[Path]] = {"prices": prices}
    if features == "cae":
        inputs["checkpoint"] = _require(config.paths.checkpoint, "train")
    store = config.paths.embedding_store
    expected = _provenance(config, f"encode:{features}", inputs)
    if not force and _artifacts.is_fresh(store, expected):
        return StepResult(store, reused=True)

    loaded = load_csv(prices)
    embedder = RawFeatureEmbedder() if features == "raw" else ChartEmbedder(load_checkpoint(config), config.render)
    records: Dict[Tuple[str, str], Tuple[str, str, str, np.ndarray]] = {}
    for plan in backtest_service.rebalance_schedule(loaded.calendar, config.backtest):
        universe = universe_at(loaded.series, loaded.calendar, plan.rebalance_date, config.backtest.formation_window)
        if not universe:
            continue
        for embedding in embedder(universe, plan.rebalance_date):
            key = (embedding.symbol, embedding.window_start.isoformat())
            records[key] = (*key, embedding.model_id, embedding.vector)
    EmbeddingRepository(store).write(records.values())
    EMBEDDINGS_WRITTEN.inc(len(records))
    _artifacts.write_provenance(store, expected)
    return StepResult(store, reused=False, detail=f"embeddings={len(records)} features={features}")


def stored_embedder(config: PipelineConfig) -> StoredEmbedder:
    store = _require(config.paths.embedding_store, "encode")
    _artifacts.warn_on_mismatch(store, config.config_hash())
    recorded = _artifacts.read_provenance(store)
    # 原始收益特征会跳过零波动股票，缺项不视为错误
    strict = recorded is None or recorded.command != "encode:raw"
    return StoredEmbedder(EmbeddingRepository(store), strict=strict)


def cluster_dates(config: PipelineConfig) -> StepResult:
    loaded = load_prices(config)
    embed = stored_embedder(config)
    results = ResultRepository(config.paths.report_dir)
    provenance = _provenance(config, "cluster", {"prices": config.paths.prices, "embeddings": config.paths.embedding_store})
    assignments: List[ClusterAssignment] = []
    for plan in backtest_service.rebalance_schedule(loaded.calendar, config.backtest):
        universe = universe_at(loaded.series, loaded.calendar, plan.rebalance_date, config.backtest.formation_window)
        embeddings = embed(universe, plan.rebalance_date) if len(universe) >= 2 else []
        if len(embeddings) < 2:
            logger.warning(
                f"pipeline.cluster_skipped: date={plan.rebalance_date} universe={len(universe)} embedded={len(embeddings)}"
            )
            continue
        graph, assignment = partition(embeddings, config.cluster, plan.rebalance_date)
        assignments.append(assignment)
        graph_path = results.write_table(
            GRAPHS.format(date=plan.rebalance_date.isoformat()), graph.to_frame().reset_index(names="symbol")
        )
        _artifacts.write_provenance(graph_path, provenance)
    target = results.write_table(ASSIGNMENTS, assignments_frame(assignments))
    _artifacts.write_provenance(target, provenance)
    return StepResult(target, reused=False, detail=f"rebalances={len(assignments)} method={config.cluster.method}")


def run_backtest(config: PipelineConfig, embed: Optional[backtest_service.EmbedFn] = None) -> backtest_service.BacktestReport:
    loaded = load_prices(config)
    embed = embed or stored_embedder(config)
    report = backtest_service.run(loaded, embed, config.backtest, clustering=config.cluster)
    results = ResultRepository(config.paths.report_dir)
    notes = list(report.notes)
    if config.backtest.paper_mode:
        notes.append("paper_mode: embedding model trained on charts spanning the whole history (look-ahead in training)")
    written = [
        results.write_table(METRICS, metrics_frame(report.metrics)),
        results.write_equity(report.curve.values),
        results.write_table(TRADES, backtest_service.trades_frame(report.periods)),
        results.write_table(PORTFOLIOS, portfolios_frame([period.portfolio for period in report.periods if period.portfolio])),
        results.write_table(
            ASSIGNMENTS, assignments_frame([period.assignment for period in report.periods if period.assignment])
        ),
        results.write_notes(notes),
    ]
    provenance = _provenance(config, "backtest", {"prices": config.paths.prices, "embeddings": config.paths.embedding_store})
    for artifact in written:
        _artifacts.write_provenance(artifact, provenance)
    return report


def load_report(config: PipelineConfig):
    results = ResultRepository(config.paths.report_dir)
    _require(results.path(METRICS), "backtest")
    return results.read_metrics(), results.read_equity()


def format_metrics(metrics: Dict[str, Optional[float]]) -> str:
    width = max(len(name) for name in metrics)
    lines = [f"{'metric'.ljust(width)}  value"]
    for name, value in metrics.items():
        shown = "undefined" if value is None else f"{value:.6f}"
        lines.append(f"{name.ljust(width)}  {shown}")
    return "\n".join(lines)


def write_report_plot(config: PipelineConfig) -> Path:
    results = ResultRepository(config.paths.report_dir)
    _, curve = load_report(config)
    benchmark = None
    inputs: Dict[str, Optional[Path]] = {"metrics": results.path(METRICS), "equity": results.path(EQUITY)}
    if config.paths.benchmark_csv is not None:
        benchmark = ResultRepository.read_curve(config.paths.benchmark_csv)
        inputs["benchmark"] = config.paths.benchmark_csv
    plot = results.write_plot(curve, benchmark, title="portfolio equity")
    _artifacts.write_provenance(plot, _provenance(config, "report", inputs))
    return plot


__all__ = [
    "MissingArtifactError",
    "StepResult",
    "cluster_dates",
    "encode_store",
    "format_metrics",
    "ingest",
    "load_checkpoint",
    "load_prices",
    "load_report",
    "render",
    "run_backtest",
    "stored_embedder",
    "train_model",
    "training_rows",
    "write_report_plot",
]
