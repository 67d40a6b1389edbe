"""K 线图 PNG 与 manifest 的落盘封装。"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from datetime import date
from pathlib import Path
from typing import Any, Dict, Iterable, List

import pandas as pd

MANIFEST_NAME = "manifest.csv"
MANIFEST_META_NAME = "manifest.meta.json"


class ChartDirectoryError(Exception):
    """图片目录不可写或 manifest 缺失。"""


@dataclass(frozen=True)
class ManifestRow:
    symbol: str
    start_date: date
    path: Path


class ChartRepository:
    """管理单个图片目录：PNG 文件 + ``manifest.csv`` + 渲染参数 sidecar。"""

    def __init__(self, root: Path) -> None:
        self.root = Path(root)

    @property
    def manifest_path(self) -> Path:
        return self.root / MANIFEST_NAME

    def ensure_writable(self) -> None:
        try:
            self.root.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise ChartDirectoryError(f"无法创建图片目录 {self.root}: {exc}") from exc
        if not os.access(self.root, os.W_OK):
            raise ChartDirectoryError(f"图片目录不可写: {self.root}")

    def write_png(self, name: str, payload: bytes) -> Path:
        path = self.root / name
        tmp = path.with_name(path.name + ".tmp")
        tmp.write_bytes(payload)
        tmp.replace(path)
        return path

    def write_manifest(self, rows: Iterable[ManifestRow], *, render_config: Dict[str, Any]) -> Path:
        records = [
            {"symbol": row.symbol, "start_date": row.start_date.isoformat(), "path": row.path.name}
            for row in rows
        ]
        frame = pd.DataFrame.from_records(records, columns=["symbol", "start_date", "path"])
        frame.to_csv(self.manifest_path, index=False, encoding="utf-8", lineterminator="\n")
        meta = {"render_config": render_config, "charts": len(records)}
        (self.root / MANIFEST_META_NAME).write_text(
            json.dumps(meta, sort_keys=True, indent=2) + "\n", encoding="utf-8"
        )
        return self.manifest_path

    def read_manifest(self) -> List[ManifestRow]:
        if not self.manifest_path.exists():
            raise ChartDirectoryError(f"manifest 不存在: {self.manifest_path}")
        frame = pd.read_csv(self.manifest_path, dtype=str, keep_default_na=False)
        return [
            ManifestRow(
                symbol=record.symbol,
                start_date=date.fromisoformat(record.start_date),
                path=self.root / record.path,
            )
            for record in frame.itertuples(index=False)
        ]

    def read_render_config(self) -> Dict[str, Any]:
        meta_path = self.root / MANIFEST_META_NAME
        if not meta_path.exists():
            return {}
        return json.loads(meta_path.read_text(encoding="utf-8")).get("render_config", {})


__all__ = ["ChartDirectoryError", "ChartRepository", "MANIFEST_META_NAME", "MANIFEST_NAME", "ManifestRow"]
