from __future__ import annotations

from typing import Any, Dict

from apps.pipeline.options import PipelineCommand
from apps.schemas.config import PipelineConfig
from apps.services import pipeline_service


class Command(PipelineCommand):
    help = "对每个调仓日的嵌入做模块度聚类，写出 assignments.csv 与相似度矩阵。"
    command_name = "cluster"
    locks_report_dir = True

    def run(self, config: PipelineConfig, options: Dict[str, Any]) -> None:
        result = pipeline_service.cluster_dates(config)
        self.stdout.write(f"assignments written: {result.artifact} {result.detail}")
