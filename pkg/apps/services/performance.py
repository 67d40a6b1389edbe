"""权益曲线与七项回测指标。

年化约定：日均收益 ×252、月均 ×12、年均 ×1；日夏普 ×√252。月/年收益以每个自然月/年
最后一个点相对上一期期末计算，首期相对曲线起点。
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Dict, Iterable, Optional, Tuple

import numpy as np
import pandas as pd

from apps.services.market_data import TradingCalendar
from apps.services.portfolio import sharpe_ratio

TRADING_DAYS = 252
MONTHS = 12


@dataclass(frozen=True, eq=False)
class EquityCurve:
    """日期严格递增、取值为正的组合净值序列，起点 1.0。"""

    values: pd.Series

    def __post_init__(self) -> None:
        index = self.values.index
        if not isinstance(index, pd.DatetimeIndex):
            raise ValueError("净值曲线索引必须是 DatetimeIndex")
        if self.values.empty:
            raise ValueError("净值曲线不能为空")
        if len(index) > 1 and not (np.diff(index.asi8) > 0).all():
            raise ValueError("净值曲线日期必须严格递增")
        if not (self.values.to_numpy() > 0).all():
            raise ValueError("净值必须为正")

    @classmethod
    def from_points(cls, points: Iterable[Tuple[object, float]]) -> "EquityCurve":
        dates, values = zip(*points)
        return cls(pd.Series(np.asarray(values, dtype=np.float64), index=pd.DatetimeIndex(dates, name="date"), name="value"))

    def __len__(self) -> int:
        return len(self.values)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, EquityCurve):
            return NotImplemented
        return self.values.equals(other.values)

    __hash__ = None  # type: ignore[assignment]

    @property
    def start(self) -> float:
        return float(self.values.iloc[0])

    @property
    def end(self) -> float:
        return float(self.values.iloc[-1])

    def daily_returns(self) -> np.ndarray:
        values = self.values.to_numpy(dtype=np.float64)
        return values[1:] / values[:-1] - 1.0

    def on_calendar(self, calendar: TradingCalendar) -> "EquityCurve":
        """对齐到曲线区间内的全部交易日，缺失日沿用前值。"""

        first, last = self.values.index[0], self.values.index[-1]
        dates = calendar.index[(calendar.index >= first) & (calendar.index <= last)]
        dates = dates.union(self.values.index)
        return EquityCurve(self.values.reindex(dates).ffill().rename("value"))


@dataclass(frozen=True)
class MetricSuite:
    total_return: float
    daily_sharpe: Optional[float]
    max_drawdown: float
    mean_return_daily: float
    mean_return_monthly: float
    mean_return_yearly: float
    win_years: float

    def as_dict(self) -> Dict[str, Optional[float]]:
        return asdict(self)


def max_drawdown(curve: EquityCurve) -> float:
    """min_t (V_t − max_{u≤t} V_u) / max_{u≤t} V_u，结果 ≤ 0。"""

    values = curve.values.to_numpy(dtype=np.float64)
    peaks = np.maximum.accumulate(values)
    return float(min(0.0, ((values - peaks) / peaks).min()))


def period_returns(curve: EquityCurve, frequency: str) -> pd.Series:
    """frequency 为 ``"M"`` 或 ``"Y"``：每期最后一个净值相对上期期末的收益。"""

    values = curve.values
    periods = values.index.to_period(frequency)
    closing = values.groupby(periods).last()
    previous = closing.shift(1)
    previous.iloc[0] = curve.start
    return closing / previous - 1.0


def report_metrics(curve: EquityCurve, calendar: Optional[TradingCalendar] = None) -> MetricSuite:
    if calendar is not None:
        curve = curve.on_calendar(calendar)
    daily = curve.daily_returns()
    monthly = period_returns(curve, "M")
    yearly = period_returns(curve, "Y")
    daily_sharpe = None
    if daily.size >= 2:
        ratio = sharpe_ratio(daily)
        daily_sharpe = None if ratio is None else ratio * math.sqrt(TRADING_DAYS)
    return MetricSuite(
        total_return=curve.end / curve.start - 1.0,
        daily_sharpe=daily_sharpe,
        max_drawdown=max_drawdown(curve),
        mean_return_daily=float(daily.mean()) * TRADING_DAYS if daily.size else 0.0,
        mean_return_monthly=float(monthly.mean()) * MONTHS,
        mean_return_yearly=float(yearly.mean()),
        win_years=float((yearly > 0).mean()),
    )


def metrics_frame(metrics: MetricSuite) -> pd.DataFrame:
    """一行一个指标：``metric,value``，未定义值留空。"""

    return pd.DataFrame(
        [{"metric": name, "value": value} for name, value in metrics.as_dict().items()],
        columns=["metric", "value"],
    )


__all__ = [
    "EquityCurve",
    "MetricSuite",
    "TRADING_DAYS",
    "max_drawdown",
    "metrics_frame",
    "period_returns",
    "report_metrics",
]
