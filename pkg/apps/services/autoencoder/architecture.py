"""卷积自编码器结构描述与形状代数。

结构以有序 stage 列表描述，构造时即完成逐层形状推导；解码器输出与编码器输入不一致
时在构造阶段抛出 ArchitectureError，而不是等到前向计算。
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Any, Dict, List, Literal, Tuple

IMAGE_CHANNELS = 3

# (通道数, 卷积层数)，每个 block 末尾接 2×2 池化
_VGG16_BLOCKS: Tuple[Tuple[int, int], ...] = ((64, 2), (128, 2), (256, 3), (512, 3), (512, 3))


class ArchitectureError(ValueError):
    """stage 组合得到的尺寸不自洽。"""


@dataclass(frozen=True)
class ConvStage:
    """3×3（或 kernel×kernel）卷积 + ReLU，可选 pool×pool 最大池化。"""

    channels: int
    kernel: int = 3
    stride: int = 1
    pool: int = 1


@dataclass(frozen=True)
class DenseStage:
    """全连接层，输出 reshape 为 (channels, size, size) 的空间图。"""

    units: int
    reshape: Tuple[int, int, int]


@dataclass(frozen=True)
class DeconvStage:
    """转置卷积上采样；最后一个 stage 使用 sigmoid，其余 ReLU。"""

    channels: int
    kernel: int
    stride: int
    padding: int


Shape = Tuple[int, int, int]


def conv_output(size: int, stage: ConvStage) -> int:
    padding = stage.kernel // 2
    return (size + 2 * padding - stage.kernel) // stage.stride + 1


def deconv_output(size: int, stage: DeconvStage) -> int:
    return (size - 1) * stage.stride - 2 * stage.padding + stage.kernel


@dataclass(frozen=True)
class CaeArchitecture:
    preset: str
    input_size: int
    embedding_dim: int
    encoder_spec: Tuple[ConvStage, ...]
    decoder_spec: Tuple[Any, ...]
    project_embedding: bool = False
    encoder_shapes: Tuple[Shape, ...] = field(init=False, compare=False, repr=False)
    decoder_shapes: Tuple[Shape, ...] = field(init=False, compare=False, repr=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "encoder_shapes", tuple(self._encoder_shapes()))
        object.__setattr__(self, "decoder_shapes", tuple(self._decoder_shapes()))
        final = self.decoder_shapes[-1]
        expected = (IMAGE_CHANNELS, self.input_size, self.input_size)
        if final != expected:
            raise ArchitectureError(f"{self.preset}: 解码器输出 {final} 与输入 {expected} 不一致")

    def _encoder_shapes(self) -> List[Shape]:
        if self.input_size < 1 or self.embedding_dim < 1:
            raise ArchitectureError("input_size 与 embedding_dim 必须为正")
        if not self.encoder_spec:
            raise ArchitectureError("编码器至少需要一个卷积 stage")
        channels, size = IMAGE_CHANNELS, self.input_size
        shapes: List[Shape] = []
        for index, stage in enumerate(self.encoder_spec):
            if not isinstance(stage, ConvStage):
                raise ArchitectureError(f"encoder_spec[{index}] 必须是 ConvStage")
            size = conv_output(size, stage)
            if stage.pool > 1:
                if size % stage.pool:
                    raise ArchitectureError(f"encoder_spec[{index}]: 尺寸 {size} 不能被池化 {stage.pool} 整除")
                size //= stage.pool
            if size < 1:
                raise ArchitectureError(f"encoder_spec[{index}]: 空间尺寸降为 0")
            channels = stage.channels
            shapes.append((channels, size, size))
        if not self.project_embedding and channels != self.embedding_dim:
            raise ArchitectureError(
                f"{self.preset}: 末层通道 {channels} 与 embedding_dim {self.embedding_dim} 不一致且未启用投影"
            )
        return shapes

    def _decoder_shapes(self) -> List[Shape]:
        if not self.decoder_spec or not isinstance(self.decoder_spec[0], DenseStage):
            raise ArchitectureError("解码器必须以一个全连接 stage 开始")
        dense = self.decoder_spec[0]
        c, h, w = dense.reshape
        if c * h * w != dense.units or h != w:
            raise ArchitectureError(f"全连接 {dense.units} 无法 reshape 为 {dense.reshape}")
        shapes: List[Shape] = [(c, h, w)]
        size = h
        for index, stage in enumerate(self.decoder_spec[1:], start=1):
            if not isinstance(stage, DeconvStage):
                raise ArchitectureError(f"decoder_spec[{index}] 必须是 DeconvStage")
            size = deconv_output(size, stage)
            if size < 1:
                raise ArchitectureError(f"decoder_spec[{index}]: 空间尺寸降为 0")
            shapes.append((stage.channels, size, size))
        return shapes

    @property
    def deconv_stages(self) -> int:
        return len(self.decoder_spec) - 1

    def to_dict(self) -> Dict[str, Any]:
        def stage_dict(stage: Any) -> Dict[str, Any]:
            return {"kind": type(stage).__name__, **asdict(stage)}

        return {
            "preset": self.preset,
            "input_size": self.input_size,
            "embedding_dim": self.embedding_dim,
            "project_embedding": self.project_embedding,
            "encoder_spec": [stage_dict(stage) for stage in self.encoder_spec],
            "decoder_spec": [stage_dict(stage) for stage in self.decoder_spec],
        }

    @classmethod
    def from_dict(cls, payload: Dict[str, Any]) -> "CaeArchitecture":
        kinds = {"ConvStage": ConvStage, "DenseStage": DenseStage, "DeconvStage": DeconvStage}

        def build(raw: Dict[str, Any]) -> Any:
            raw = dict(raw)
            kind = kinds.get(raw.pop("kind", ""))
            if kind is None:
                raise ArchitectureError(f"未知 stage 类型: {raw}")
            if "reshape" in raw:
                raw["reshape"] = tuple(raw["reshape"])
            return kind(**raw)

        return cls(
            preset=payload["preset"],
            input_size=int(payload["input_size"]),
            embedding_dim=int(payload["embedding_dim"]),
            project_embedding=bool(payload.get("project_embedding", False)),
            encoder_spec=tuple(build(stage) for stage in payload["encoder_spec"]),
            decoder_spec=tuple(build(stage) for stage in payload["decoder_spec"]),
        )

    @classmethod
    def paper(cls) -> "CaeArchitecture":
        """224×224 输入；16 层参考网络去掉全连接层后接全局平均池化得到 512 维；
        解码器为 784 单元全连接（reshape 为 1×28×28）+ 6 个转置卷积。"""

        encoder: List[ConvStage] = []
        for channels, repeats in _VGG16_BLOCKS:
            encoder.extend(ConvStage(channels) for _ in range(repeats - 1))
            encoder.append(ConvStage(channels, pool=2))
        decoder = (
            DenseStage(units=784, reshape=(1, 28, 28)),
            DeconvStage(64, kernel=3, stride=1, padding=1),   # 28
            DeconvStage(64, kernel=4, stride=2, padding=1),   # 56
            DeconvStage(32, kernel=3, stride=1, padding=1),   # 56
            DeconvStage(32, kernel=4, stride=2, padding=1),   # 112
            DeconvStage(16, kernel=4, stride=2, padding=1),   # 224
            DeconvStage(IMAGE_CHANNELS, kernel=3, stride=1, padding=1),
        )
        return cls(preset="paper", input_size=224, embedding_dim=512, encoder_spec=tuple(encoder), decoder_spec=decoder)

    @classmethod
    def desk(cls) -> "CaeArchitecture":
        """64×64 输入，4 个卷积 stage（16/32/64/128），1×1 投影到 64 维后全局平均池化。"""

        encoder = tuple(ConvStage(channels, pool=2) for channels in (16, 32, 64, 128))
        decoder = (
            DenseStage(units=128 * 4 * 4, reshape=(128, 4, 4)),
            DeconvStage(64, kernel=4, stride=2, padding=1),   # 8
            DeconvStage(32, kernel=4, stride=2, padding=1),   # 16
            DeconvStage(16, kernel=4, stride=2, padding=1),   # 32
            DeconvStage(IMAGE_CHANNELS, kernel=4, stride=2, padding=1),  # 64
        )
        return cls(
            preset="desk",
            input_size=64,
            embedding_dim=64,
            encoder_spec=encoder,
            decoder_spec=decoder,
            project_embedding=True,
        )

    @classmethod
    def from_preset(cls, preset: Literal["paper", "desk"]) -> "CaeArchitecture":
        if preset == "paper":
            return cls.paper()
        if preset == "desk":
            return cls.desk()
        raise ArchitectureError(f"未知预设: {preset}")


__all__ = [
    "ArchitectureError",
    "CaeArchitecture",
    "ConvStage",
    "DeconvStage",
    "DenseStage",
    "conv_output",
    "deconv_output",
]
