from __future__ import annotations

from typing import Any, Dict

from apps.pipeline.options import PipelineCommand
from apps.schemas.config import PipelineConfig
from apps.services import pipeline_service


class Command(PipelineCommand):
    help = "校验行情 CSV，逐行报告被拒绝的行，并写出规范化的 paths.prices。"
    command_name = "ingest"

    def add_command_arguments(self, parser) -> None:
        parser.add_argument("--data", default=None, help="输入行情 CSV（覆盖 paths.data_csv）")

    def overrides(self, options: Dict[str, Any]) -> Dict[str, Any]:
        return {"paths.data_csv": options.get("data")}

    def run(self, config: PipelineConfig, options: Dict[str, Any]) -> None:
        loaded, target = pipeline_service.ingest(config)
        for diagnostic in loaded.diagnostics:
            self.stderr.write(str(diagnostic))
        self.stdout.write(
            f"ingested symbols={len(loaded)} trading_days={len(loaded.calendar)} "
            f"rejected={len(loaded.diagnostics)} -> {target}"
        )
