"""所有流水线命令共用的参数、配置加载与错误处理。"""

from __future__ import annotations

import os
import time
from argparse import ArgumentParser
from pathlib import Path
from typing import Any, Dict, Optional

from django.conf import settings
from django.core.management.base import BaseCommand, CommandError

from apps.pipeline.errors import translate
from apps.repositories.artifact_repository import ArtifactRepository
from apps.schemas.config import ConfigError, PipelineConfig, load_pipeline_config, parse_override
from apps.telemetry.logging import get_logger
from apps.telemetry.metrics import export_textfile, mark_command

logger = get_logger(__name__)
_DEFAULTS = PipelineConfig()


def default_help(text: str, value: Any) -> str:
    return f"{text}（默认 {value}）"


class PipelineCommand(BaseCommand):
    """子类实现 ``add_command_arguments`` / ``overrides`` / ``run``。"""

    requires_system_checks: list = []
    command_name = ""
    # 写报告目录的命令需要持锁
    locks_report_dir = False

    def add_arguments(self, parser: ArgumentParser) -> None:
        parser.add_argument(
            "--config",
            type=Path,
            default=None,
            help="YAML 配置文件（点分键）；默认读取环境变量 CHARTFOLIO_CONFIG",
        )
        parser.add_argument(
            "--set",
            dest="overrides",
            action="append",
            default=[],
            metavar="KEY=VALUE",
            help="覆盖任意配置项，例如 --set train.batch_size=32，可重复",
        )
        parser.add_argument("--seed", type=int, default=None, help=default_help("全局随机种子", _DEFAULTS.seed))
        self.add_command_arguments(parser)

    def add_command_arguments(self, parser: ArgumentParser) -> None:
        return None

    def overrides(self, options: Dict[str, Any]) -> Dict[str, Any]:
        return {}

    def run(self, config: PipelineConfig, options: Dict[str, Any]) -> None:
        raise NotImplementedError

    def load_config(self, options: Dict[str, Any]) -> PipelineConfig:
        path: Optional[Path] = options.get("config")
        if path is None and getattr(settings, "CHARTFOLIO_CONFIG", ""):
            path = Path(settings.CHARTFOLIO_CONFIG)
        overrides: Dict[str, Any] = {}
        for item in options.get("overrides") or []:
            key, value = parse_override(item)
            overrides[key] = value
        if options.get("seed") is not None:
            overrides["seed"] = options["seed"]
            overrides["train.seed"] = options["seed"]
        overrides.update({key: value for key, value in self.overrides(options).items() if value is not None})
        return load_pipeline_config(path, overrides)

    def handle(self, *args: Any, **options: Any) -> None:
        log = get_logger(__name__, command=self.command_name)
        started = time.monotonic()
        config: Optional[PipelineConfig] = None
        try:
            config = self.load_config(options)
            if self.locks_report_dir:
                with ArtifactRepository().locked(config.paths.report_dir):
                    self.run(config, options)
            else:
                self.run(config, options)
        except Exception as exc:  # noqa: BLE001 - translate 对未知异常原样抛出
            error = translate(exc)
            mark_command(self.command_name, error.error_code)
            log.error(f"pipeline.command_failed: code={error.error_code} message={error.message}")
            if isinstance(exc, ConfigError):
                for message in exc.messages:
                    self.stderr.write(message)
            self._export_metrics(config)
            raise CommandError(str(error), returncode=error.exit_code) from exc
        mark_command(self.command_name, "ok")
        log.info(f"pipeline.command_done: elapsed={time.monotonic() - started:.2f}s")
        self._export_metrics(config)

    @staticmethod
    def _export_metrics(config: Optional[PipelineConfig]) -> None:
        if config is None or os.environ.get("CHARTFOLIO_DISABLE_METRICS_FILE"):
            return
        try:
            export_textfile(config.paths.report_dir / "pipeline.prom")
        except OSError as exc:
            logger.warning(f"pipeline.metrics_not_written: error={exc}")


__all__ = ["PipelineCommand", "default_help"]
