"""行情导入、校验、切窗与收益率计算。

约定：
1. 输入为已复权的日线 OHLC，CSV 列为 ``date,symbol,open,high,low,close``
2. 违反 K 线不变量的行被逐行拒绝，诊断信息形如 ``<file>:<line>: <reason>``
3. 窗口跨越交易日历缺口时直接丢弃，不做前向填充
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from datetime import date
from pathlib import Path
from typing import Dict, Iterable, Iterator, List, Mapping, Optional, Sequence

import numpy as np
import pandas as pd

from apps.repositories.price_repository import PRICE_COLUMNS, PriceRepository
from apps.telemetry.metrics import mark_rows_rejected

logger = logging.getLogger(__name__)

PRICE_FIELDS = ("low", "high", "open", "close")


class DataValidationError(Exception):
    """行情数据不满足结构或不变量要求。"""


class EmptyDataError(DataValidationError):
    """过滤后没有任何有效行情。"""


@dataclass(frozen=True)
class OhlcBar:
    date: date
    low: float
    high: float
    open: float
    close: float

    def violations(self) -> List[str]:
        """返回该 K 线违反的不变量描述，空列表表示合法。"""

        return bar_violations(self.low, self.high, self.open, self.close)


def bar_violations(low: float, high: float, open_: float, close: float) -> List[str]:
    problems: List[str] = []
    values = {"low": low, "high": high, "open": open_, "close": close}
    for name, value in values.items():
        if not math.isfinite(value):
            problems.append(f"non-finite {name}")
        elif value <= 0:
            problems.append(f"{name} must be strictly positive")
    if problems:
        return problems
    if low > high:
        problems.append("low > high")
    if low > min(open_, close):
        problems.append("low > min(open, close)")
    if high < max(open_, close):
        problems.append("high < max(open, close)")
    return problems


@dataclass(frozen=True, eq=False)
class OhlcSeries:
    """单只股票按日期排序的 K 线序列，frame 以 DatetimeIndex 为索引。"""

    symbol: str
    frame: pd.DataFrame

    def __post_init__(self) -> None:
        index = self.frame.index
        if not isinstance(index, pd.DatetimeIndex):
            raise DataValidationError(f"{self.symbol}: 索引必须是 DatetimeIndex")
        if len(index) > 1 and not (np.diff(index.asi8) > 0).all():
            raise DataValidationError(f"{self.symbol}: 日期必须严格递增且不重复")
        missing = [name for name in PRICE_FIELDS if name not in self.frame.columns]
        if missing:
            raise DataValidationError(f"{self.symbol}: 缺少列 {missing}")

    @classmethod
    def from_bars(cls, symbol: str, bars: Sequence[OhlcBar]) -> "OhlcSeries":
        frame = pd.DataFrame(
            {name: [float(getattr(bar, name)) for bar in bars] for name in PRICE_FIELDS},
            index=pd.DatetimeIndex([pd.Timestamp(bar.date) for bar in bars], name="date"),
        )
        return cls(symbol=symbol, frame=frame)

    def __len__(self) -> int:
        return len(self.frame)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, OhlcSeries):
            return NotImplemented
        return self.symbol == other.symbol and self.frame.loc[:, list(PRICE_FIELDS)].equals(
            other.frame.loc[:, list(PRICE_FIELDS)]
        ) and self.frame.index.equals(other.frame.index)

    __hash__ = None  # type: ignore[assignment]

    @property
    def dates(self) -> pd.DatetimeIndex:
        return self.frame.index

    @property
    def closes(self) -> np.ndarray:
        return self.frame["close"].to_numpy(dtype=float)

    @property
    def bars(self) -> List[OhlcBar]:
        return [
            OhlcBar(date=ts.date(), low=row.low, high=row.high, open=row.open, close=row.close)
            for ts, row in zip(self.frame.index, self.frame.itertuples(index=False))
        ]

    def upto(self, end: pd.Timestamp) -> "OhlcSeries":
        """截断到 end（含），供无前视检查使用。"""

        return OhlcSeries(self.symbol, self.frame.loc[: pd.Timestamp(end)])


@dataclass(frozen=True, eq=False)
class PriceWindow:
    """父序列中连续 W 个交易日的切片。"""

    symbol: str
    frame: pd.DataFrame
    start_index: int

    def __len__(self) -> int:
        return len(self.frame)

    @property
    def bars(self) -> List[OhlcBar]:
        return OhlcSeries(self.symbol, self.frame).bars

    @property
    def start_date(self) -> date:
        return self.frame.index[0].date()

    @property
    def end_date(self) -> date:
        return self.frame.index[-1].date()

    def prices(self) -> Dict[str, np.ndarray]:
        return {name: self.frame[name].to_numpy(dtype=float) for name in PRICE_FIELDS}

    def closes(self) -> np.ndarray:
        return self.frame["close"].to_numpy(dtype=float)


class TradingCalendar:
    """排序去重后的交易日集合。"""

    def __init__(self, dates: Iterable) -> None:
        index = pd.DatetimeIndex(pd.to_datetime(list(dates))).normalize()
        self._index = index.unique().sort_values()
        self._index.name = "date"

    @classmethod
    def from_series(cls, series: Iterable[OhlcSeries]) -> "TradingCalendar":
        stamps: List[pd.Timestamp] = []
        for item in series:
            stamps.extend(item.dates)
        return cls(stamps)

    @property
    def index(self) -> pd.DatetimeIndex:
        return self._index

    def __len__(self) -> int:
        return len(self._index)

    def __iter__(self) -> Iterator[pd.Timestamp]:
        return iter(self._index)

    def __contains__(self, item: object) -> bool:
        try:
            return pd.Timestamp(item) in self._index  # type: ignore[arg-type]
        except (TypeError, ValueError):
            return False

    def __getitem__(self, position: int) -> pd.Timestamp:
        return self._index[position]

    def positions(self, dates: pd.DatetimeIndex) -> np.ndarray:
        """返回每个日期在日历中的下标，不在日历内为 -1。"""

        return self._index.get_indexer(dates)

    def position(self, when) -> int:
        located = self._index.get_indexer([pd.Timestamp(when)])[0]
        if located < 0:
            raise KeyError(f"{when} 不是交易日")
        return int(located)


@dataclass(frozen=True)
class RowDiagnostic:
    path: str
    line: int
    reason: str

    def __str__(self) -> str:
        return f"{self.path}:{self.line}: {self.reason}"


@dataclass
class LoadResult:
    """load_csv 的结果：按代码分组的序列、交易日历以及被拒绝行的诊断。"""

    series: Dict[str, OhlcSeries]
    calendar: TradingCalendar
    diagnostics: List[RowDiagnostic] = field(default_factory=list)

    def __iter__(self) -> Iterator[OhlcSeries]:
        return iter(self.series.values())

    def __len__(self) -> int:
        return len(self.series)


def load_csv(path: Path, calendar: Optional[TradingCalendar] = None) -> LoadResult:
    """读取行情 CSV，逐行校验并按代码分组。

    :param path: UTF-8 CSV，必须包含表头 ``date,symbol,open,high,low,close``
    :param calendar: 可选交易日历；给出时不在日历内的行会被拒绝
    :return: LoadResult，序列按日期排序，diagnostics 记录每个被拒绝的行
    """

    path = Path(path)
    try:
        raw = PriceRepository.read_raw(path)
    except pd.errors.ParserError as exc:
        raise DataValidationError(f"{path}: CSV 结构错误 {exc}") from exc
    missing = [column for column in PRICE_COLUMNS if column not in raw.columns]
    if missing:
        raise DataValidationError(f"{path}: 缺少列 {missing}")

    reasons: Dict[int, List[str]] = {}

    def reject(mask: pd.Series, reason) -> None:
        mask = np.asarray(mask, dtype=bool)
        for line, value in zip(raw.loc[mask, "line"], raw.index[mask]):
            text = reason(value) if callable(reason) else reason
            reasons.setdefault(int(line), []).append(text)

    symbols = raw["symbol"].str.strip()
    reject(symbols == "", "missing symbol")

    dates = pd.to_datetime(raw["date"].str.strip(), format="%Y-%m-%d", errors="coerce")
    reject(dates.isna(), lambda i: f"unparseable date {raw.at[i, 'date']!r}")

    prices: Dict[str, pd.Series] = {}
    for name in PRICE_FIELDS:
        parsed = pd.to_numeric(raw[name].str.strip(), errors="coerce")
        reject(parsed.isna(), lambda i, name=name: f"unparseable {name} {raw.at[i, name]!r}")
        prices[name] = parsed

    parsed_ok = ~(dates.isna() | pd.concat(prices, axis=1).isna().any(axis=1) | (symbols == ""))
    for i in raw.index[parsed_ok]:
        problems = bar_violations(
            float(prices["low"][i]), float(prices["high"][i]), float(prices["open"][i]), float(prices["close"][i])
        )
        for problem in problems:
            reasons.setdefault(int(raw.at[i, "line"]), []).append(f"invariant violated: {problem}")

    if calendar is not None:
        off_calendar = parsed_ok & (calendar.positions(pd.DatetimeIndex(dates.where(parsed_ok))) < 0)
        reject(off_calendar, lambda i: f"date {raw.at[i, 'date'].strip()} not in trading calendar")

    table = pd.DataFrame(
        {"line": raw["line"], "symbol": symbols, "date": dates, **prices}
    )
    accepted = table.loc[~table["line"].isin(list(reasons))]

    duplicated = accepted.duplicated(subset=["symbol", "date"], keep="first")
    for line, symbol, when in accepted.loc[duplicated, ["line", "symbol", "date"]].itertuples(index=False):
        reasons.setdefault(int(line), []).append(f"duplicate date {when.date().isoformat()} for {symbol}")
    accepted = accepted.loc[~duplicated]

    diagnostics = [
        RowDiagnostic(path=str(path), line=line, reason="; ".join(texts))
        for line, texts in sorted(reasons.items())
    ]
    for diagnostic in diagnostics:
        logger.warning(f"market_data.row_rejected: {diagnostic}")
    if diagnostics:
        mark_rows_rejected("invalid_row", len(diagnostics))

    if accepted.empty:
        raise EmptyDataError(f"{path}: 没有有效的行情行")

    series: Dict[str, OhlcSeries] = {}
    for symbol, group in accepted.groupby("symbol", sort=True):
        ordered = group.sort_values("date", kind="mergesort")
        frame = ordered.loc[:, list(PRICE_FIELDS)].astype(float)
        frame.index = pd.DatetimeIndex(ordered["date"].to_numpy(), name="date")
        series[str(symbol)] = OhlcSeries(symbol=str(symbol), frame=frame)

    resolved = calendar or TradingCalendar.from_series(series.values())
    logger.info(
        f"market_data.loaded: path={path} symbols={len(series)} rows={len(accepted)} rejected={len(diagnostics)}"
    )
    return LoadResult(series=series, calendar=resolved, diagnostics=diagnostics)


def write_csv(series: Iterable[OhlcSeries], path: Path) -> Path:
    """load_csv 的逆操作。"""

    frames = []
    for item in series:
        frame = item.frame.loc[:, list(PRICE_FIELDS)].copy()
        frame.insert(0, "date", [ts.date().isoformat() for ts in item.frame.index])
        frame.insert(1, "symbol", item.symbol)
        frames.append(frame.reset_index(drop=True))
    return PriceRepository.write_frames(frames, Path(path))


def extract_windows(
    series: OhlcSeries,
    window: int,
    stride: int,
    calendar: Optional[TradingCalendar] = None,
) -> List[PriceWindow]:
    """按步长切出完整且在交易日历上连续的窗口。

    起点为 0, stride, 2·stride, …；长度不足返回空列表；跨越日历缺口的窗口被跳过。
    未给出日历时以序列自身的日期为日历（不存在缺口）。
    """

    if window < 1 or stride < 1:
        raise ValueError("window 与 stride 必须为正整数")
    count = len(series)
    if count < window:
        return []
    if calendar is None:
        positions = np.arange(count)
    else:
        positions = calendar.positions(series.dates)
        if (positions < 0).any():
            raise DataValidationError(f"{series.symbol}: 存在不在交易日历内的日期")

    windows: List[PriceWindow] = []
    for offset in range(0, count - window + 1, stride):
        if positions[offset + window - 1] - positions[offset] != window - 1:
            continue
        windows.append(
            PriceWindow(
                symbol=series.symbol,
                frame=series.frame.iloc[offset: offset + window],
                start_index=offset,
            )
        )
    return windows


def window_ending_at(
    series: OhlcSeries,
    calendar: TradingCalendar,
    end_date,
    window: int,
) -> Optional[PriceWindow]:
    """返回以 end_date 收盘结束的完整窗口；该股票在这 W 个交易日有任何缺失则返回 None。"""

    end_position = calendar.position(end_date)
    if end_position + 1 < window:
        return None
    needed = calendar.index[end_position - window + 1: end_position + 1]
    located = series.dates.get_indexer(needed)
    if (located < 0).any() or located[-1] - located[0] != window - 1:
        return None
    start = int(located[0])
    return PriceWindow(symbol=series.symbol, frame=series.frame.iloc[start: start + window], start_index=start)


def daily_returns(series: OhlcSeries) -> pd.Series:
    """returns[t] = (close[t] − close[t−1]) / close[t−1]，索引为 t 的日期。"""

    if len(series) < 2:
        raise DataValidationError(f"{series.symbol}: 计算收益率至少需要 2 根 K 线")
    closes = series.closes
    values = (closes[1:] - closes[:-1]) / closes[:-1]
    return pd.Series(values, index=series.dates[1:], name=series.symbol)


def universe_at(
    series: Mapping[str, OhlcSeries],
    calendar: TradingCalendar,
    end_date,
    window: int,
) -> Dict[str, PriceWindow]:
    """调仓日的可投资股票池：所有在该日结束处有完整窗口的股票，按代码排序。"""

    windows: Dict[str, PriceWindow] = {}
    for symbol in sorted(series):
        found = window_ending_at(series[symbol], calendar, end_date, window)
        if found is not None:
            windows[symbol] = found
    return windows


__all__ = [
    "DataValidationError",
    "EmptyDataError",
    "LoadResult",
    "OhlcBar",
    "OhlcSeries",
    "PriceWindow",
    "RowDiagnostic",
    "TradingCalendar",
    "daily_returns",
    "extract_windows",
    "load_csv",
    "universe_at",
    "window_ending_at",
    "write_csv",
]
