"""嵌入向量库：CSV ``symbol,window_start,model_id,v0..v{D-1}``。"""

from __future__ import annotations

from pathlib import Path
from typing import Dict, Iterable, List, Tuple

import numpy as np
import pandas as pd

KEY_COLUMNS = ["symbol", "window_start", "model_id"]


class EmbeddingStoreError(Exception):
    """嵌入库缺失或列结构不一致。"""


class EmbeddingRepository:
    def __init__(self, path: Path) -> None:
        self.path = Path(path)

    def exists(self) -> bool:
        return self.path.exists()

    def write(self, rows: Iterable[Tuple[str, str, str, np.ndarray]]) -> Path:
        """rows 为 (symbol, window_start ISO 日期, model_id, vector)，按 (symbol, window_start) 排序写出。"""

        records = sorted(rows, key=lambda row: (row[0], row[1]))
        dims = {len(row[3]) for row in records}
        if len(dims) > 1:
            raise EmbeddingStoreError(f"向量维度不一致: {sorted(dims)}")
        dim = dims.pop() if dims else 0
        vector_columns = [f"v{index}" for index in range(dim)]
        keys = pd.DataFrame([row[:3] for row in records], columns=KEY_COLUMNS)
        vectors = pd.DataFrame(
            np.vstack([np.asarray(row[3], dtype=np.float64) for row in records]) if records else np.empty((0, dim)),
            columns=vector_columns,
        )
        self.path.parent.mkdir(parents=True, exist_ok=True)
        pd.concat([keys, vectors], axis=1).to_csv(self.path, index=False, encoding="utf-8", lineterminator="\n")
        return self.path

    def read(self) -> pd.DataFrame:
        if not self.path.exists():
            raise FileNotFoundError(f"嵌入库不存在: {self.path}")
        frame = pd.read_csv(
            self.path,
            dtype={"symbol": str, "window_start": str, "model_id": str},
            keep_default_na=False,
            float_precision="round_trip",
        )
        missing = [column for column in KEY_COLUMNS if column not in frame.columns]
        if missing:
            raise EmbeddingStoreError(f"{self.path}: 缺少列 {missing}")
        return frame

    def lookup(self) -> Dict[Tuple[str, str], Tuple[str, np.ndarray]]:
        """(symbol, window_start) → (model_id, vector)。"""

        frame = self.read()
        vector_columns: List[str] = [column for column in frame.columns if column not in KEY_COLUMNS]
        matrix = frame[vector_columns].to_numpy(dtype=np.float64)
        return {
            (symbol, start): (model_id, matrix[index])
            for index, (symbol, start, model_id) in enumerate(frame[KEY_COLUMNS].itertuples(index=False, name=None))
        }


__all__ = ["EmbeddingRepository", "EmbeddingStoreError", "KEY_COLUMNS"]
