"""把 PriceWindow 确定性地栅格化为固定尺寸的 RGB K 线图。

栅格规则（逐像素可复现）：
- 四周留白 round(margin·size) 像素，价格轴按窗口内 min(low)..max(high) 归一化
- 第 d 天占绘图区第 d 个等宽列，列边界用整数除法确定
- 影线为列中心的 1 像素竖线，实体居中，宽度 round(body_fraction·列宽)
- 收盘 > 开盘用 up_color，< 用 down_color，相等画 1 像素 wick_color 横线
- 所有取整均为 round-half-away-from-zero，无抗锯齿
"""

from __future__ import annotations

import io
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from datetime import date
from pathlib import Path
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np
from PIL import Image

from apps.repositories.chart_repository import ChartRepository, ManifestRow
from apps.schemas.config import RenderConfig
from apps.services.market_data import PriceWindow
from apps.telemetry.metrics import CHARTS_RENDERED

logger = logging.getLogger(__name__)

WHITE = (255, 255, 255)
# 归一化坐标先吸附到该精度，平移/缩放带来的末位误差不会改变半像素判定
_SNAP_DECIMALS = 9


@dataclass(frozen=True, eq=False)
class ChartImage:
    """行优先的 8 位 RGB 像素，shape 为 (height, width, 3)。"""

    pixels: np.ndarray
    symbol: str
    start_date: date

    @property
    def width(self) -> int:
        return int(self.pixels.shape[1])

    @property
    def height(self) -> int:
        return int(self.pixels.shape[0])

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ChartImage):
            return NotImplemented
        return np.array_equal(self.pixels, other.pixels)

    __hash__ = None  # type: ignore[assignment]

    def to_png_bytes(self) -> bytes:
        buffer = io.BytesIO()
        Image.fromarray(self.pixels).save(buffer, format="PNG")
        return buffer.getvalue()

    @classmethod
    def from_png(cls, path: Path, symbol: str = "", start_date: Optional[date] = None) -> "ChartImage":
        with Image.open(path) as image:
            pixels = np.asarray(image.convert("RGB"), dtype=np.uint8).copy()
        return cls(pixels=pixels, symbol=symbol, start_date=start_date or date.min)

    def as_float(self) -> np.ndarray:
        """缩放到 [0, 1] 的 (3, H, W) float32 张量。"""

        return np.ascontiguousarray(self.pixels.transpose(2, 0, 1), dtype=np.float32) / 255.0


def round_half_away(value: float) -> int:
    """round-half-away-from-zero。"""

    return int(math.copysign(math.floor(abs(value) + 0.5), value))


def _rows_for(prices: np.ndarray, low: float, high: float, top: int, bottom: int) -> np.ndarray:
    if high == low:
        centre = round_half_away((top + bottom) / 2)
        return np.full(prices.shape, centre, dtype=int)
    scaled = np.round((prices - low) / (high - low), _SNAP_DECIMALS)
    rows = np.round(bottom - scaled * (bottom - top), _SNAP_DECIMALS)
    return np.floor(rows + 0.5).astype(int)


def _column_bounds(days: int, left: int, right: int) -> List[Tuple[int, int]]:
    span = right - left
    return [(left + (d * span) // days, left + ((d + 1) * span) // days) for d in range(days)]


def render(window: PriceWindow, config: RenderConfig) -> ChartImage:
    """栅格化单个窗口；相同输入得到逐字节相同的像素缓冲。"""

    prices = window.prices()
    days = len(window)
    if days == 0:
        raise ValueError("空窗口无法渲染")
    width, height = config.width, config.height
    pixels = np.full((height, width, 3), 255, dtype=np.uint8)

    margin_x = round_half_away(config.margin_fraction * width)
    margin_y = round_half_away(config.margin_fraction * height)
    top, bottom = margin_y, height - 1 - margin_y
    left, right = margin_x, width - margin_x
    if right - left < days or bottom < top:
        raise ValueError(f"绘图区 {right - left}x{bottom - top + 1} 容纳不下 {days} 根 K 线")

    low = float(prices["low"].min())
    high = float(prices["high"].max())
    rows = {name: _rows_for(values, low, high, top, bottom) for name, values in prices.items()}

    up, down, wick = (np.array(color, dtype=np.uint8) for color in (config.up_color, config.down_color, config.wick_color))
    for day, (col_left, col_right) in enumerate(_column_bounds(days, left, right)):
        column_width = col_right - col_left
        centre = col_left + (column_width - 1) // 2
        body_width = max(1, min(column_width, round_half_away(config.candle_body_fraction * column_width)))
        body_left = max(col_left, centre - (body_width - 1) // 2)
        body_right = min(col_right, body_left + body_width)

        row_high, row_low = rows["high"][day], rows["low"][day]
        pixels[row_high: row_low + 1, centre] = wick

        open_price, close_price = prices["open"][day], prices["close"][day]
        row_open, row_close = rows["open"][day], rows["close"][day]
        if close_price == open_price:
            pixels[row_open, body_left:body_right] = wick
            continue
        body_top, body_bottom = min(row_open, row_close), max(row_open, row_close)
        pixels[body_top: body_bottom + 1, body_left:body_right] = up if close_price > open_price else down

    return ChartImage(pixels=pixels, symbol=window.symbol, start_date=window.start_date)


def chart_filename(symbol: str, start_date: date) -> str:
    safe = "".join(char if char.isalnum() or char in "-_." else "-" for char in symbol)
    return f"{safe}_{start_date:%Y%m%d}.png"


def render_universe(
    windows: Iterable[PriceWindow],
    config: RenderConfig,
    out_dir: Path,
    *,
    workers: int = 1,
) -> List[ManifestRow]:
    """为每个窗口写出一张 PNG，并在全部文件完成后写 manifest.csv。

    重复运行会以相同字节覆盖已有文件；输出与执行顺序无关。
    """

    repository = ChartRepository(Path(out_dir))
    repository.ensure_writable()
    ordered: Sequence[PriceWindow] = sorted(windows, key=lambda item: (item.symbol, item.start_date))

    def _render_one(window: PriceWindow) -> ManifestRow:
        image = render(window, config)
        path = repository.write_png(chart_filename(window.symbol, window.start_date), image.to_png_bytes())
        return ManifestRow(symbol=window.symbol, start_date=window.start_date, path=path)

    if workers > 1 and len(ordered) > 1:
        with ThreadPoolExecutor(max_workers=workers, thread_name_prefix="render") as pool:
            rows = list(pool.map(_render_one, ordered))
    else:
        rows = [_render_one(window) for window in ordered]

    repository.write_manifest(rows, render_config=config.model_dump(mode="json"))
    CHARTS_RENDERED.inc(len(rows))
    logger.info(f"chart_render.universe_written: out_dir={out_dir} charts={len(rows)}")
    return rows


__all__ = [
    "ChartImage",
    "WHITE",
    "chart_filename",
    "render",
    "render_universe",
    "round_half_away",
]
