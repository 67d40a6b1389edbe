"""推理：encode 取瓶颈向量，reconstruct 给出重建张量与 MSE。均在 eval 模式下执行。"""

from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass
from datetime import date
from typing import List, Sequence

import numpy as np
import torch

from apps.repositories.checkpoint_repository import Checkpoint
from apps.services.autoencoder.architecture import CaeArchitecture
from apps.services.autoencoder.network import ConvAutoencoder
from apps.services.autoencoder.training import check_image_size
from apps.services.chart_render import ChartImage

ENCODE_BATCH = 64


class NonFiniteEmbeddingError(ArithmeticError):
    """编码结果包含 NaN/Inf。"""


@dataclass(frozen=True, eq=False)
class Embedding:
    symbol: str
    window_start: date
    vector: np.ndarray
    model_id: str

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Embedding):
            return NotImplemented
        return (
            (self.symbol, self.window_start, self.model_id) == (other.symbol, other.window_start, other.model_id)
            and np.array_equal(self.vector, other.vector)
        )

    __hash__ = None  # type: ignore[assignment]


@dataclass(frozen=True, eq=False)
class Reconstruction:
    output: np.ndarray  # (H, W, 3)，取值 [0, 1]
    loss: float


MODEL_CACHE_SIZE = 4
_MODELS: OrderedDict[str, ConvAutoencoder] = OrderedDict()


def load_model(checkpoint: Checkpoint) -> ConvAutoencoder:
    """按 model_id 缓存的 eval 模式网络，最多保留 MODEL_CACHE_SIZE 个，超出时淘汰最久未用的。"""

    cached = _MODELS.get(checkpoint.model_id)
    if cached is None:
        cached = ConvAutoencoder(CaeArchitecture.from_dict(checkpoint.architecture))
        cached.load_state_dict(checkpoint.state_dict)
        cached.eval()
        _MODELS[checkpoint.model_id] = cached
        while len(_MODELS) > MODEL_CACHE_SIZE:
            _MODELS.popitem(last=False)
    else:
        _MODELS.move_to_end(checkpoint.model_id)
    return cached


def _batch(images: Sequence[ChartImage], architecture: CaeArchitecture) -> torch.Tensor:
    for image in images:
        check_image_size(image, architecture)
    return torch.from_numpy(np.stack([image.as_float() for image in images]))


def encode(images: Sequence[ChartImage], checkpoint: Checkpoint) -> List[Embedding]:
    model = load_model(checkpoint)
    embeddings: List[Embedding] = []
    with torch.no_grad():
        for offset in range(0, len(images), ENCODE_BATCH):
            chunk = list(images[offset: offset + ENCODE_BATCH])
            vectors = model.encode(_batch(chunk, model.architecture)).to(torch.float64).numpy()
            if not np.isfinite(vectors).all():
                raise NonFiniteEmbeddingError(f"{chunk[0].symbol}: 编码结果包含非有限值")
            embeddings.extend(
                Embedding(image.symbol, image.start_date, vector.copy(), checkpoint.model_id)
                for image, vector in zip(chunk, vectors)
            )
    return embeddings


def reconstruct(image: ChartImage, checkpoint: Checkpoint) -> Reconstruction:
    model = load_model(checkpoint)
    with torch.no_grad():
        inputs = _batch([image], model.architecture)
        output, _ = model(inputs)
        loss = torch.mean((output - inputs) ** 2).item()
    return Reconstruction(output=output[0].permute(1, 2, 0).numpy().copy(), loss=float(loss))


__all__ = ["Embedding", "NonFiniteEmbeddingError", "Reconstruction", "encode", "load_model", "reconstruct"]
