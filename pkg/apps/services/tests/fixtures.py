"""测试用的合成行情构造工具。"""

from __future__ import annotations

from datetime import date
from pathlib import Path
from typing import Dict, Iterable, Mapping, Optional, Sequence

import numpy as np
import pandas as pd

from apps.services.market_data import OhlcSeries, PriceWindow, TradingCalendar

START = date(2024, 1, 1)


def business_days(count: int, start: date = START) -> pd.DatetimeIndex:
    return pd.bdate_range(start=start, periods=count, name="date")


def series_from_closes(
    symbol: str,
    closes: Sequence[float],
    dates: Optional[pd.DatetimeIndex] = None,
    spread: float = 0.01,
) -> OhlcSeries:
    """开盘取前收，最高/最低在 max/min(open, close) 外放 spread。"""

    closes = np.asarray(closes, dtype=float)
    opens = np.concatenate([[closes[0]], closes[:-1]])
    highs = np.maximum(opens, closes) * (1.0 + spread)
    lows = np.minimum(opens, closes) * (1.0 - spread)
    index = dates if dates is not None else business_days(len(closes))
    frame = pd.DataFrame({"low": lows, "high": highs, "open": opens, "close": closes}, index=index)
    frame.index.name = "date"
    return OhlcSeries(symbol=symbol, frame=frame)


def geometric(count: int, rate: float, start: float = 100.0) -> np.ndarray:
    return start * (1.0 + rate) ** np.arange(count)


def window_of(series: OhlcSeries, start: int = 0, length: Optional[int] = None) -> PriceWindow:
    length = length or len(series) - start
    return PriceWindow(symbol=series.symbol, frame=series.frame.iloc[start: start + length], start_index=start)


def calendar_of(series: Iterable[OhlcSeries]) -> TradingCalendar:
    return TradingCalendar.from_series(series)


def write_price_csv(path: Path, series: Mapping[str, OhlcSeries]) -> Path:
    rows = []
    for symbol, item in sorted(series.items()):
        for stamp, bar in zip(item.dates, item.frame.itertuples(index=False)):
            rows.append(
                f"{stamp.date().isoformat()},{symbol},{float(bar.open)!r},{float(bar.high)!r},{float(bar.low)!r},{float(bar.close)!r}"
            )
    path.write_text("date,symbol,open,high,low,close\n" + "\n".join(rows) + "\n", encoding="utf-8")
    return path


def regime_market(days: int = 120, seed: int = 7) -> Dict[str, OhlcSeries]:
    """12 只股票两种行情：U* 每日漂移 +0.2%，F* 无漂移。

    同组股票共享一条行情冲击（日波动 0.2%），每只股票再叠加独立的 0.04% 个股噪声，
    因此同组收益高度相关但不完全相同，K 线图也各不相同。
    """

    rng = np.random.default_rng(seed)
    shocks = {"U": rng.normal(0.0, 0.002, size=days), "F": rng.normal(0.0, 0.002, size=days)}
    drift = {"U": 0.002, "F": 0.0}
    base = {"U": 100.0, "F": 50.0}
    market: Dict[str, OhlcSeries] = {}
    for regime in ("U", "F"):
        for number in range(6):
            own = rng.normal(0.0, 0.0004, size=days)
            closes = base[regime] * (1.0 + 0.25 * number) * np.cumprod(1.0 + drift[regime] + shocks[regime] + own)
            market[f"{regime}{number}"] = series_from_closes(f"{regime}{number}", closes)
    return market


DATA_DIR = Path(__file__).resolve().parent / "data"


def reference_window(symbol: str = "REF") -> PriceWindow:
    """收盘 100..119，开盘取前收（首日 99），最高/最低为收盘 ±1。"""

    closes = np.arange(100.0, 120.0)
    frame = pd.DataFrame(
        {"low": closes - 1.0, "high": closes + 1.0, "open": closes - 1.0, "close": closes},
        index=business_days(len(closes)),
    )
    return PriceWindow(symbol=symbol, frame=frame, start_index=0)


def read_plain_ppm(path: Path) -> np.ndarray:
    """读取 ASCII (P3) PPM 为 (H, W, 3) uint8，忽略 # 注释行。"""

    tokens = []
    for line in path.read_text(encoding="ascii").splitlines():
        tokens.extend(line.split("#", 1)[0].split())
    if tokens[0] != "P3":
        raise ValueError(f"{path}: 不是 P3 PPM")
    width, height, depth = (int(token) for token in tokens[1:4])
    if depth != 255:
        raise ValueError(f"{path}: 仅支持 8 位色深")
    return np.array(tokens[4:], dtype=np.uint8).reshape(height, width, 3)
