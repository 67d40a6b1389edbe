"""流水线配置的 Pydantic 模型与配置文件加载。

配置文件为 YAML，键采用扁平的点分形式（``train.batch_size: 64``），也接受嵌套映射。
命令行参数优先于文件。
"""

from __future__ import annotations

import hashlib
import json
from datetime import date
from pathlib import Path
from typing import Any, Dict, Literal, Mapping, Optional, Tuple

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

RGB = Tuple[int, int, int]

PRESET_INPUT_SIZE: Dict[str, int] = {"paper": 224, "desk": 64}


class ConfigError(Exception):
    """配置文件或参数校验失败，messages 为字段级提示。"""

    def __init__(self, messages: list[str]) -> None:
        self.messages = messages
        super().__init__("; ".join(messages))


class _Section(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")


class RenderConfig(_Section):
    """K 线图栅格化参数。"""

    width: int = Field(224, ge=8, le=4096, description="图像宽度（像素）")
    height: int = Field(224, ge=8, le=4096, description="图像高度（像素）")
    candle_body_fraction: float = Field(0.8, gt=0.0, le=1.0, description="实体占每日列宽的比例")
    margin_fraction: float = Field(0.05, ge=0.0, lt=0.5, description="四周留白比例")
    up_color: RGB = Field((0, 255, 0), description="收涨颜色")
    down_color: RGB = Field((255, 0, 0), description="收跌颜色")
    wick_color: RGB = Field((0, 0, 0), description="影线与十字星颜色")
    stride: int = Field(1, ge=1, description="训练样本窗口步长（交易日）")

    @field_validator("up_color", "down_color", "wick_color")
    @classmethod
    def _check_rgb(cls, value: RGB) -> RGB:
        if any(not 0 <= channel <= 255 for channel in value):
            raise ValueError("RGB 分量必须在 0..255")
        if tuple(value) == (255, 255, 255):
            raise ValueError("颜色不能与白色背景相同")
        return tuple(int(channel) for channel in value)  # type: ignore[return-value]

    @model_validator(mode="after")
    def _distinct_colors(self) -> "RenderConfig":
        if len({self.up_color, self.down_color, self.wick_color}) != 3:
            raise ValueError("up_color/down_color/wick_color 必须两两不同")
        return self


class ArchitectureConfig(_Section):
    preset: Literal["paper", "desk"] = Field("paper", description="网络规模预设")

    @property
    def input_size(self) -> int:
        return PRESET_INPUT_SIZE[self.preset]


class TrainConfig(_Section):
    """自编码器训练超参数。"""

    batch_size: int = Field(64, ge=1)
    learning_rate: float = Field(0.001, gt=0.0)
    lr_decay_factor: float = Field(0.1, gt=0.0, lt=1.0)
    plateau_patience: int = Field(3, ge=1)
    plateau_min_delta: float = Field(1e-4, ge=0.0)
    max_epochs: int = Field(30, ge=1)
    seed: int = 0
    optimizer: Literal["sgd", "adam"] = "sgd"
    momentum: float = Field(0.9, ge=0.0, lt=1.0)


class BacktestConfig(_Section):
    """滚动 20 日建仓 / 10 日持有 / 步长 10 的回测协议参数。"""

    formation_window: int = Field(20, ge=3, description="建仓窗口天数，至少 3 天才有 2 个日收益用于夏普打分")
    holding_period: int = Field(10, ge=1)
    stride: int = Field(10, ge=1)
    k2: int = Field(5, ge=1)
    start_date: Optional[date] = None
    end_date: Optional[date] = None
    score_lookback: Optional[int] = Field(None, ge=3, description="夏普打分回看天数，默认等于 formation_window")
    skip_thin_dates: bool = False
    paper_mode: bool = False

    @model_validator(mode="after")
    def _check_protocol(self) -> "BacktestConfig":
        if self.start_date and self.end_date and self.start_date >= self.end_date:
            raise ValueError("start_date 必须早于 end_date")
        if self.stride < self.holding_period:
            raise ValueError("stride 不能小于 holding_period（持有期会重叠）")
        if self.score_lookback is not None and self.score_lookback > self.formation_window:
            raise ValueError("score_lookback 不能超过 formation_window（否则会越过建仓窗口）")
        return self

    @property
    def lookback(self) -> int:
        return self.score_lookback or self.formation_window


class ClusterConfig(_Section):
    """调仓日聚类方法。kmeans 需预先给定簇数，结果随 seed 变化。"""

    method: Literal["modularity", "kmeans"] = Field("modularity", description="modularity 为确定性贪心模块度")
    n_clusters: int = Field(5, ge=1, description="kmeans 簇数，超过当期股票数时取股票数")
    n_init: int = Field(10, ge=1, description="kmeans 随机初始化次数")
    seed: int = 0


class PathsConfig(_Section):
    data_csv: Path = Path("data/prices.csv")
    prices: Path = Path("artifacts/prices.csv")
    chart_dir: Path = Path("artifacts/charts")
    checkpoint: Path = Path("artifacts/model.ckpt")
    embedding_store: Path = Path("artifacts/embeddings.csv")
    report_dir: Path = Path("artifacts/report")
    benchmark_csv: Optional[Path] = None


class PipelineConfig(_Section):
    """整条流水线的唯一配置来源。"""

    seed: int = 0
    render: RenderConfig = RenderConfig()
    architecture: ArchitectureConfig = ArchitectureConfig()
    train: TrainConfig = TrainConfig()
    backtest: BacktestConfig = BacktestConfig()
    cluster: ClusterConfig = ClusterConfig()
    paths: PathsConfig = PathsConfig()

    @model_validator(mode="before")
    @classmethod
    def _propagate_seed(cls, data: Any) -> Any:
        # 全局 seed 在 train/cluster 段未显式给出时下发
        if isinstance(data, dict) and "seed" in data:
            for section in ("train", "cluster"):
                values = dict(data.get(section) or {})
                values.setdefault("seed", data["seed"])
                data = {**data, section: values}
        return data

    @model_validator(mode="before")
    @classmethod
    def _size_from_preset(cls, data: Any) -> Any:
        # 未显式给出图像尺寸时取预设的输入尺寸
        if not isinstance(data, dict):
            return data
        architecture = data.get("architecture")
        preset = architecture.get("preset") if isinstance(architecture, Mapping) else None
        if preset not in PRESET_INPUT_SIZE:
            return data
        render = dict(data.get("render") or {})
        render.setdefault("width", PRESET_INPUT_SIZE[preset])
        render.setdefault("height", PRESET_INPUT_SIZE[preset])
        return {**data, "render": render}

    @model_validator(mode="after")
    def _render_matches_architecture(self) -> "PipelineConfig":
        size = self.architecture.input_size
        if (self.render.width, self.render.height) != (size, size):
            raise ValueError(
                f"render.width/height 必须等于 {self.architecture.preset} 预设的输入尺寸 {size}"
            )
        return self

    def canonical_json(self) -> str:
        return json.dumps(self.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))

    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical_json().encode("utf-8")).hexdigest()


def _nest(flat: Mapping[str, Any]) -> Dict[str, Any]:
    """把点分键展开为嵌套字典，嵌套映射原样合并。"""

    nested: Dict[str, Any] = {}
    for key, value in flat.items():
        if isinstance(value, Mapping):
            value = _nest(value)
        parts = str(key).split(".")
        cursor = nested
        for part in parts[:-1]:
            cursor = cursor.setdefault(part, {})
            if not isinstance(cursor, dict):
                raise ConfigError([f"{key}: 与同名标量键冲突"])
        leaf = parts[-1]
        if isinstance(value, dict) and isinstance(cursor.get(leaf), dict):
            cursor[leaf] = {**cursor[leaf], **value}
        else:
            cursor[leaf] = value
    return nested


def _merge(base: Dict[str, Any], override: Mapping[str, Any]) -> Dict[str, Any]:
    merged = dict(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _merge(merged[key], value)
        else:
            merged[key] = value
    return merged


def format_validation_error(exc: ValidationError) -> list[str]:
    messages = []
    for error in exc.errors():
        location = ".".join(str(part) for part in error["loc"]) or "config"
        messages.append(f"{location}: {error['msg']}")
    return messages


def read_config_file(path: Path) -> Dict[str, Any]:
    if not path.exists():
        raise ConfigError([f"config: 文件不存在 {path}"])
    try:
        raw = yaml.safe_load(path.read_text(encoding="utf-8")) or {}
    except yaml.YAMLError as exc:
        raise ConfigError([f"config: YAML 解析失败 {exc}"]) from exc
    if not isinstance(raw, Mapping):
        raise ConfigError(["config: 顶层必须是映射"])
    return _nest(raw)


def load_pipeline_config(
    path: Optional[Path] = None,
    overrides: Optional[Mapping[str, Any]] = None,
) -> PipelineConfig:
    """读取配置文件并套用点分覆盖项（覆盖项优先）。"""

    data = read_config_file(path) if path is not None else {}
    if overrides:
        data = _merge(data, _nest({key: value for key, value in overrides.items() if value is not None}))
    try:
        return PipelineConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(format_validation_error(exc)) from exc


def parse_override(item: str) -> tuple[str, Any]:
    """解析 ``key=value``，值按 YAML 标量解释。"""

    if "=" not in item:
        raise ConfigError([f"{item}: 覆盖项必须是 key=value"])
    key, raw = item.split("=", 1)
    return key.strip(), yaml.safe_load(raw) if raw.strip() else None


__all__ = [
    "ArchitectureConfig",
    "BacktestConfig",
    "ClusterConfig",
    "ConfigError",
    "PRESET_INPUT_SIZE",
    "PathsConfig",
    "PipelineConfig",
    "RenderConfig",
    "TrainConfig",
    "load_pipeline_config",
    "parse_override",
]
