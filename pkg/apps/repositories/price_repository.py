"""行情 CSV 仓储，只负责文件读写，不做业务校验。"""

from __future__ import annotations

from pathlib import Path
from typing import Iterable

import pandas as pd

PRICE_COLUMNS = ("date", "symbol", "open", "high", "low", "close")


class PriceRepository:
    """读取原始文本行 / 写出规范化行情表。"""

    @staticmethod
    def read_raw(path: Path) -> pd.DataFrame:
        """按字符串读取全部列，附带 ``line`` 列（文件中的 1 起始行号）。"""

        if not path.exists():
            raise FileNotFoundError(f"行情文件不存在: {path}")
        frame = pd.read_csv(
            path,
            dtype=str,
            keep_default_na=False,
            skip_blank_lines=False,
            encoding="utf-8",
        )
        frame.columns = [str(column).strip().lower() for column in frame.columns]
        # 表头占第 1 行
        frame.insert(0, "line", frame.index.to_numpy() + 2)
        blank = frame.drop(columns="line").apply(lambda column: column.str.strip() == "").all(axis=1)
        return frame.loc[~blank].reset_index(drop=True)

    @staticmethod
    def write_frames(frames: Iterable[pd.DataFrame], path: Path) -> Path:
        """写出 ``date,symbol,open,high,low,close``，float 使用 repr 以保证往返无损。"""

        path.parent.mkdir(parents=True, exist_ok=True)
        parts = [frame.loc[:, list(PRICE_COLUMNS)] for frame in frames]
        table = pd.concat(parts, ignore_index=True) if parts else pd.DataFrame(columns=list(PRICE_COLUMNS))
        table = table.sort_values(["symbol", "date"], kind="mergesort")
        table.to_csv(path, index=False, encoding="utf-8", lineterminator="\n", float_format=None)
        return path


__all__ = ["PRICE_COLUMNS", "PriceRepository"]
