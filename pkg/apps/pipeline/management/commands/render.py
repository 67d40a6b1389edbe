from __future__ import annotations

from typing import Any, Dict

from apps.pipeline.options import PipelineCommand, default_help
from apps.schemas.config import RenderConfig, PipelineConfig
from apps.services import pipeline_service

_DEFAULTS = RenderConfig()


class Command(PipelineCommand):
    help = "把每只股票的建仓窗口渲染为 K 线 PNG，并写出 manifest.csv。"
    command_name = "render"

    def add_command_arguments(self, parser) -> None:
        parser.add_argument("--width", type=int, default=None, help=default_help("图像宽度", _DEFAULTS.width))
        parser.add_argument("--height", type=int, default=None, help=default_help("图像高度", _DEFAULTS.height))
        parser.add_argument("--out-dir", default=None, help="图片目录（覆盖 paths.chart_dir）")
        parser.add_argument("--workers", type=int, default=1, help=default_help("并行渲染线程数", 1))
        parser.add_argument("--force", action="store_true", help="忽略缓存重新渲染")

    def overrides(self, options: Dict[str, Any]) -> Dict[str, Any]:
        return {
            "render.width": options.get("width"),
            "render.height": options.get("height"),
            "paths.chart_dir": options.get("out_dir"),
        }

    def run(self, config: PipelineConfig, options: Dict[str, Any]) -> None:
        result = pipeline_service.render(config, force=options["force"], workers=options["workers"])
        state = "reused" if result.reused else "written"
        self.stdout.write(f"charts {state}: {result.artifact} {result.detail}".rstrip())
