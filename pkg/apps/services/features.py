"""回测使用的嵌入函数：在线渲染+编码、读取嵌入库、原始收益序列。"""

from __future__ import annotations

import logging
from datetime import date
from typing import Dict, List, Mapping, Tuple

import numpy as np

from apps.repositories.checkpoint_repository import Checkpoint
from apps.repositories.embedding_repository import EmbeddingRepository
from apps.schemas.config import RenderConfig
from apps.services.autoencoder.inference import Embedding, encode
from apps.services.chart_render import render
from apps.services.market_data import PriceWindow

logger = logging.getLogger(__name__)

RAW_MODEL_ID = "raw-returns"


class MissingEmbeddingError(LookupError):
    """嵌入库中缺少某个 (symbol, window_start)。"""


class ChartEmbedder:
    """把窗口渲染成 K 线图后用 checkpoint 编码。"""

    def __init__(self, checkpoint: Checkpoint, render_config: RenderConfig) -> None:
        self.checkpoint = checkpoint
        self.render_config = render_config

    def __call__(self, windows: Mapping[str, PriceWindow], rebalance_date: date) -> List[Embedding]:
        images = [render(windows[symbol], self.render_config) for symbol in sorted(windows)]
        return encode(images, self.checkpoint)


class StoredEmbedder:
    """从 ``encode`` 命令写出的嵌入库按 (symbol, window_start) 取向量。"""

    def __init__(self, repository: EmbeddingRepository, model_id: str = "", *, strict: bool = True) -> None:
        self._lookup: Dict[Tuple[str, str], Tuple[str, np.ndarray]] = repository.lookup()
        self.model_id = model_id
        self.strict = strict
        self.source = repository.path

    def __call__(self, windows: Mapping[str, PriceWindow], rebalance_date: date) -> List[Embedding]:
        embeddings: List[Embedding] = []
        missing: List[str] = []
        for symbol in sorted(windows):
            start = windows[symbol].start_date
            found = self._lookup.get((symbol, start.isoformat()))
            if found is None or (self.model_id and found[0] != self.model_id):
                missing.append(f"{symbol}@{start.isoformat()}")
                continue
            embeddings.append(Embedding(symbol, start, found[1], found[0]))
        if missing and not self.strict:
            logger.info(f"features.stored_missing_skipped: date={rebalance_date.isoformat()} count={len(missing)}")
        elif missing:
            raise MissingEmbeddingError(
                f"{self.source} 缺少 {rebalance_date.isoformat()} 的嵌入: {', '.join(missing[:5])}"
                + (f" 等 {len(missing)} 条" if len(missing) > 5 else "")
            )
        return embeddings


class RawFeatureEmbedder:
    """以窗口内标准化日收益序列为特征（余弦相似度即收益相关系数）。

    收益方差为 0 的股票无法定义方向，不参与当期聚类。
    """

    def __call__(self, windows: Mapping[str, PriceWindow], rebalance_date: date) -> List[Embedding]:
        embeddings: List[Embedding] = []
        for symbol in sorted(windows):
            vector = raw_window_features(windows[symbol])
            if vector is None:
                logger.info(f"features.raw_flat_skipped: symbol={symbol} date={rebalance_date.isoformat()}")
                continue
            embeddings.append(Embedding(symbol, windows[symbol].start_date, vector, RAW_MODEL_ID))
        return embeddings


def raw_window_features(window: PriceWindow) -> np.ndarray | None:
    closes = window.closes()
    returns = closes[1:] / closes[:-1] - 1.0
    deviation = returns.std()
    if returns.size < 2 or deviation <= 1e-12:
        return None
    return (returns - returns.mean()) / deviation


__all__ = [
    "ChartEmbedder",
    "MissingEmbeddingError",
    "RAW_MODEL_ID",
    "RawFeatureEmbedder",
    "StoredEmbedder",
    "raw_window_features",
]
