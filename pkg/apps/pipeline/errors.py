"""命令错误与退出码映射"""

from __future__ import annotations

from dataclasses import dataclass

from apps.repositories.artifact_repository import ReportLockedError
from apps.repositories.chart_repository import ChartDirectoryError
from apps.repositories.checkpoint_repository import CheckpointCorruptError
from apps.repositories.embedding_repository import EmbeddingStoreError
from apps.repositories.result_repository import CurveFormatError
from apps.schemas.config import ConfigError
from apps.services.autoencoder.architecture import ArchitectureError
from apps.services.autoencoder.inference import NonFiniteEmbeddingError
from apps.services.autoencoder.training import EmptyManifestError, ImageSizeMismatchError, NonFiniteLossError
from apps.services.backtest import InsufficientUniverseError
from apps.services.features import MissingEmbeddingError
from apps.services.graph_cluster import EmbeddingMismatchError
from apps.services.market_data import DataValidationError
from apps.services.pipeline_service import MissingArtifactError
from apps.services.portfolio import UniverseTooSmallError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_MISSING_ARTIFACT = 3
EXIT_DATA = 4
EXIT_NUMERICAL = 5


@dataclass(slots=True)
class PipelineError(Exception):
    """命令层抛出的统一错误类型"""

    error_code: str
    message: str
    exit_code: int

    def __str__(self) -> str:
        return f"[{self.error_code}] {self.message}"


# 顺序即匹配优先级，子类需排在父类之前
_MAPPING: tuple[tuple[type[BaseException], str, int], ...] = (
    (ConfigError, "config_invalid", EXIT_CONFIG),
    (ArchitectureError, "config_invalid", EXIT_CONFIG),
    (MissingArtifactError, "artifact_missing", EXIT_MISSING_ARTIFACT),
    (MissingEmbeddingError, "artifact_missing", EXIT_MISSING_ARTIFACT),
    (CheckpointCorruptError, "artifact_corrupt", EXIT_MISSING_ARTIFACT),
    (NonFiniteLossError, "numerical_failure", EXIT_NUMERICAL),
    (NonFiniteEmbeddingError, "numerical_failure", EXIT_NUMERICAL),
    (DataValidationError, "data_invalid", EXIT_DATA),
    (EmptyManifestError, "data_invalid", EXIT_DATA),
    (ImageSizeMismatchError, "data_invalid", EXIT_DATA),
    (EmbeddingMismatchError, "data_invalid", EXIT_DATA),
    (EmbeddingStoreError, "data_invalid", EXIT_DATA),
    (CurveFormatError, "data_invalid", EXIT_DATA),
    (InsufficientUniverseError, "universe_too_small", EXIT_DATA),
    (UniverseTooSmallError, "universe_too_small", EXIT_DATA),
    (ChartDirectoryError, "io_failure", EXIT_DATA),
    (ReportLockedError, "report_locked", EXIT_DATA),
    (FileNotFoundError, "input_missing", EXIT_DATA),
)


def translate(exc: BaseException) -> PipelineError:
    """把领域异常转换为 PipelineError；未知异常原样抛出由调用方处理。"""

    if isinstance(exc, PipelineError):
        return exc
    for kind, code, exit_code in _MAPPING:
        if isinstance(exc, kind):
            return PipelineError(error_code=code, message=str(exc), exit_code=exit_code)
    raise exc


__all__ = [
    "EXIT_CONFIG",
    "EXIT_DATA",
    "EXIT_MISSING_ARTIFACT",
    "EXIT_NUMERICAL",
    "EXIT_OK",
    "PipelineError",
    "translate",
]
