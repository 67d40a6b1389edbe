"""Prometheus 指标注册中心（流水线运行指标）"""

from __future__ import annotations

from pathlib import Path

from prometheus_client import CollectorRegistry, Counter, Gauge, Histogram, write_to_textfile

# 独立注册表，避免把进程级指标写进产物目录
REGISTRY = CollectorRegistry()

# 渲染侧指标
CHARTS_RENDERED = Counter(
    "charts_rendered_total",
    "已写出的 K 线图数量",
    registry=REGISTRY,
)
ROWS_REJECTED = Counter(
    "price_rows_rejected_total",
    "导入时被拒绝的行情行数",
    labelnames=("reason",),
    registry=REGISTRY,
)

# 训练侧指标
TRAIN_EPOCHS = Counter(
    "autoencoder_epochs_total",
    "自编码器完成的训练轮数",
    labelnames=("preset",),
    registry=REGISTRY,
)
TRAIN_LOSS = Gauge(
    "autoencoder_epoch_loss",
    "最近一轮的平均重建损失",
    labelnames=("preset",),
    registry=REGISTRY,
)
EMBEDDINGS_WRITTEN = Counter(
    "embeddings_written_total",
    "写入嵌入库的向量数量",
    registry=REGISTRY,
)

# 回测侧指标
REBALANCES = Counter(
    "backtest_rebalances_total",
    "回测执行的调仓次数，按结果区分",
    labelnames=("outcome",),
    registry=REGISTRY,
)
COMMUNITIES = Histogram(
    "cluster_communities",
    "每个调仓日发现的社区数量",
    buckets=(1, 2, 3, 5, 8, 13, 21, 34),
    registry=REGISTRY,
)

# 命令运行态
COMMAND_RUNS = Counter(
    "pipeline_command_runs_total",
    "命令执行次数，按 command/status 区分",
    labelnames=("command", "status"),
    registry=REGISTRY,
)


def mark_rows_rejected(reason: str, count: int = 1) -> None:
    """记录被拒绝的行情行"""

    ROWS_REJECTED.labels(reason=reason).inc(count)


def observe_epoch(preset: str, loss: float) -> None:
    """记录一轮训练"""

    TRAIN_EPOCHS.labels(preset=preset).inc()
    TRAIN_LOSS.labels(preset=preset).set(loss)


def observe_rebalance(outcome: str, communities: int | None = None) -> None:
    """记录一次调仓及其社区数"""

    REBALANCES.labels(outcome=outcome).inc()
    if communities is not None:
        COMMUNITIES.observe(communities)


def mark_command(command: str, status: str) -> None:
    """记录命令执行结果"""

    COMMAND_RUNS.labels(command=command, status=status).inc()


def export_textfile(path: Path) -> Path:
    """把注册表写成 node-exporter textfile 格式"""

    path.parent.mkdir(parents=True, exist_ok=True)
    write_to_textfile(str(path), REGISTRY)
    return path


__all__ = [
    "REGISTRY",
    "export_textfile",
    "mark_command",
    "mark_rows_rejected",
    "observe_epoch",
    "observe_rebalance",
]
