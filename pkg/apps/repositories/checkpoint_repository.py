"""自编码器 checkpoint 的二进制容器。

布局：``MAGIC(8) | version(uint16 BE) | sha256(payload)(32) | payload``，payload 为
``torch.save`` 序列化的纯字典（结构描述、参数张量、训练配置、seed、训练日志），
可以在 ``weights_only=True`` 下安全读回。
"""

from __future__ import annotations

import hashlib
import io
import struct
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Any, Dict, List, Tuple

import torch

MAGIC = b"CHARTCAE"
FORMAT_VERSION = 1
_HEADER = struct.Struct(">8sH32s")


class CheckpointCorruptError(Exception):
    """魔数、版本或校验和不匹配。"""


@dataclass(frozen=True, eq=False)
class Checkpoint:
    architecture: Dict[str, Any]
    state_dict: Dict[str, torch.Tensor]
    train_config: Dict[str, Any]
    seed: int
    log: List[Tuple[int, float, float]] = field(default_factory=list)
    config_hash: str = ""

    def payload(self) -> Dict[str, Any]:
        return {
            "format_version": FORMAT_VERSION,
            "architecture": self.architecture,
            "state_dict": {name: tensor.detach().cpu().clone() for name, tensor in self.state_dict.items()},
            "train_config": self.train_config,
            "seed": int(self.seed),
            "log": [[int(epoch), float(loss), float(lr)] for epoch, loss, lr in self.log],
            "config_hash": self.config_hash,
        }

    def to_bytes(self) -> bytes:
        buffer = io.BytesIO()
        torch.save(self.payload(), buffer)
        body = buffer.getvalue()
        return _HEADER.pack(MAGIC, FORMAT_VERSION, hashlib.sha256(body).digest()) + body

    @cached_property
    def model_id(self) -> str:
        """payload 校验和的前 16 位十六进制，嵌入向量以此标记来源模型。"""

        return _HEADER.unpack_from(self.to_bytes())[2].hex()[:16]

    @classmethod
    def from_bytes(cls, blob: bytes, source: str = "<memory>") -> "Checkpoint":
        if len(blob) < _HEADER.size:
            raise CheckpointCorruptError(f"{source}: 文件过短")
        magic, version, digest = _HEADER.unpack_from(blob)
        if magic != MAGIC:
            raise CheckpointCorruptError(f"{source}: 不是 checkpoint 文件")
        if version != FORMAT_VERSION:
            raise CheckpointCorruptError(f"{source}: 不支持的格式版本 {version}")
        body = blob[_HEADER.size:]
        if hashlib.sha256(body).digest() != digest:
            raise CheckpointCorruptError(f"{source}: 校验和不匹配")
        try:
            payload = torch.load(io.BytesIO(body), map_location="cpu", weights_only=True)
        except Exception as exc:  # noqa: BLE001 - torch 抛出多种反序列化异常
            raise CheckpointCorruptError(f"{source}: payload 无法解析 ({exc})") from exc
        checkpoint = cls(
            architecture=payload["architecture"],
            state_dict=dict(payload["state_dict"]),
            train_config=payload["train_config"],
            seed=int(payload["seed"]),
            log=[(int(epoch), float(loss), float(lr)) for epoch, loss, lr in payload["log"]],
            config_hash=payload.get("config_hash", ""),
        )
        # 以文件中的校验和为准，不依赖重新序列化
        checkpoint.__dict__["model_id"] = digest.hex()[:16]
        return checkpoint


class CheckpointRepository:
    def __init__(self, path: Path) -> None:
        self.path = Path(path)

    def exists(self) -> bool:
        return self.path.exists()

    def save(self, checkpoint: Checkpoint) -> Path:
        self.path.parent.mkdir(parents=True, exist_ok=True)
        tmp = self.path.with_name(self.path.name + ".tmp")
        tmp.write_bytes(checkpoint.to_bytes())
        tmp.replace(self.path)
        return self.path

    def load(self) -> Checkpoint:
        if not self.path.exists():
            raise FileNotFoundError(f"checkpoint 不存在: {self.path}")
        return Checkpoint.from_bytes(self.path.read_bytes(), source=str(self.path))


__all__ = ["Checkpoint", "CheckpointCorruptError", "CheckpointRepository", "FORMAT_VERSION", "MAGIC"]
