from __future__ import annotations

from typing import Any, Dict

from apps.pipeline.options import PipelineCommand
from apps.schemas.config import PipelineConfig
from apps.services import pipeline_service


class Command(PipelineCommand):
    help = "打印指标表，并输出净值曲线 SVG（可叠加 paths.benchmark_csv 基准）。"
    command_name = "report"
    locks_report_dir = True

    def add_command_arguments(self, parser) -> None:
        parser.add_argument("--benchmark", default=None, help="基准曲线 CSV date,value（覆盖 paths.benchmark_csv）")

    def overrides(self, options: Dict[str, Any]) -> Dict[str, Any]:
        return {"paths.benchmark_csv": options.get("benchmark")}

    def run(self, config: PipelineConfig, options: Dict[str, Any]) -> None:
        metrics, _ = pipeline_service.load_report(config)
        self.stdout.write(pipeline_service.format_metrics(metrics))
        plot = pipeline_service.write_report_plot(config)
        self.stdout.write(f"plot written: {plot}")
