from __future__ import annotations

from typing import Any, Dict

from apps.pipeline.options import PipelineCommand
from apps.schemas.config import PipelineConfig
from apps.services import pipeline_service


class Command(PipelineCommand):
    help = "为每个调仓日的建仓窗口计算嵌入向量，写入 paths.embedding_store。"
    command_name = "encode"

    def add_command_arguments(self, parser) -> None:
        parser.add_argument("--checkpoint", default=None, help="checkpoint 路径（覆盖 paths.checkpoint）")
        parser.add_argument(
            "--features",
            choices=["cae", "raw"],
            default="cae",
            help="cae：K 线图自编码器嵌入（默认）；raw：标准化日收益序列",
        )
        parser.add_argument("--force", action="store_true", help="忽略缓存重新计算")

    def overrides(self, options: Dict[str, Any]) -> Dict[str, Any]:
        return {"paths.checkpoint": options.get("checkpoint")}

    def run(self, config: PipelineConfig, options: Dict[str, Any]) -> None:
        result = pipeline_service.encode_store(config, features=options["features"], force=options["force"])
        state = "reused" if result.reused else "written"
        self.stdout.write(f"embeddings {state}: {result.artifact} {result.detail}".rstrip())
