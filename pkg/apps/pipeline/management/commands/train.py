from __future__ import annotations

from typing import Any, Dict

from apps.pipeline.options import PipelineCommand, default_help
from apps.schemas.config import ArchitectureConfig, PipelineConfig, TrainConfig
from apps.services import pipeline_service

_TRAIN = TrainConfig()


class Command(PipelineCommand):
    help = "在 manifest 中的 K 线图上训练卷积自编码器并写出 checkpoint。"
    command_name = "train"

    def add_command_arguments(self, parser) -> None:
        parser.add_argument(
            "--preset",
            choices=["paper", "desk"],
            default=None,
            help=default_help("网络规模预设", ArchitectureConfig().preset),
        )
        parser.add_argument("--epochs", type=int, default=None, help=default_help("训练轮数", _TRAIN.max_epochs))
        parser.add_argument("--checkpoint", default=None, help="checkpoint 输出路径（覆盖 paths.checkpoint）")
        parser.add_argument("--paper-mode", action="store_true", help="使用全部历史窗口训练（训练数据与回测区间重叠）")
        parser.add_argument("--force", action="store_true", help="忽略缓存重新训练")

    def overrides(self, options: Dict[str, Any]) -> Dict[str, Any]:
        return {
            "architecture.preset": options.get("preset"),
            "train.max_epochs": options.get("epochs"),
            "paths.checkpoint": options.get("checkpoint"),
            "backtest.paper_mode": True if options.get("paper_mode") else None,
        }

    def run(self, config: PipelineConfig, options: Dict[str, Any]) -> None:
        result = pipeline_service.train_model(config, force=options["force"])
        state = "reused" if result.reused else "written"
        self.stdout.write(f"checkpoint {state}: {result.artifact} {result.detail}".rstrip())
