"""滚动建仓 / 持有回测。

每个调仓日 t：取以 t 收盘结束的完整建仓窗口 → 嵌入 → 相似度图 → 聚类 → 夏普打分 → 选股；
随后持有 t+1..t+H，持有期内按等额买入持有逐日估值，缺失收盘价沿用前值（退市按最后收盘计）。
相邻调仓日之间不在持有期内的交易日净值保持不变。
"""

from __future__ import annotations

from dataclasses import dataclass, field
from datetime import date
from typing import Callable, Dict, List, Mapping, Optional, Sequence, Union

import numpy as np
import pandas as pd

from apps.schemas.config import BacktestConfig, ClusterConfig
from apps.services.autoencoder.inference import Embedding
from apps.services.graph_cluster import ClusterAssignment, partition
from apps.services.market_data import DataValidationError, LoadResult, OhlcSeries, PriceWindow, TradingCalendar, universe_at
from apps.services.performance import EquityCurve, MetricSuite, report_metrics
from apps.services.portfolio import Portfolio, allocate, score_window
from apps.telemetry.logging import get_logger
from apps.telemetry.metrics import observe_rebalance

logger = get_logger(__name__)


class InsufficientUniverseError(RuntimeError):
    """调仓日可投资股票不足 k2。"""

    def __init__(self, rebalance_date: date, available: int, required: int) -> None:
        self.rebalance_date = rebalance_date
        self.available = available
        self.required = required
        super().__init__(f"{rebalance_date.isoformat()}: 可投资股票 {available} 只，需要至少 {required} 只")


EmbedFn = Callable[[Mapping[str, PriceWindow], date], List[Embedding]]


@dataclass(frozen=True)
class RebalancePlan:
    position: int
    rebalance_date: date
    holding_dates: Sequence[date]


@dataclass
class PeriodLog:
    rebalance_date: date
    holding_start: date
    holding_end: date
    portfolio: Optional[Portfolio] = None
    assignment: Optional[ClusterAssignment] = None
    holding_returns: Dict[str, float] = field(default_factory=dict)
    period_return: float = 0.0
    universe_size: int = 0
    skipped: str = ""


@dataclass(frozen=True, eq=False)
class BacktestReport:
    metrics: MetricSuite
    curve: EquityCurve
    periods: List[PeriodLog]
    notes: List[str] = field(default_factory=list)

    @property
    def period_returns(self) -> List[float]:
        return [period.period_return for period in self.periods]


UNIVERSE_NOTE = "universe: symbols with a complete formation window ending on each rebalance date"
ANNUALIZATION_NOTE = "annualization: daily mean x252, monthly mean x12, daily sharpe x sqrt(252)"


def rebalance_schedule(calendar: TradingCalendar, cfg: BacktestConfig) -> List[RebalancePlan]:
    """调仓日为首个不早于 start_date 且窗口完整的交易日起每 stride 天一次，且持有期不越过 end_date。"""

    index = calendar.index
    first = cfg.formation_window - 1
    if cfg.start_date is not None:
        first = max(first, int(index.searchsorted(pd.Timestamp(cfg.start_date), side="left")))
    last = len(index) - 1
    if cfg.end_date is not None:
        last = min(last, int(index.searchsorted(pd.Timestamp(cfg.end_date), side="right")) - 1)

    plans: List[RebalancePlan] = []
    for position in range(first, last - cfg.holding_period + 1, cfg.stride):
        holding = [stamp.date() for stamp in index[position + 1: position + cfg.holding_period + 1]]
        plans.append(RebalancePlan(position=position, rebalance_date=index[position].date(), holding_dates=holding))
    return plans


def _close_matrix(series: Mapping[str, OhlcSeries], calendar: TradingCalendar) -> pd.DataFrame:
    columns = {symbol: item.frame["close"].reindex(calendar.index) for symbol, item in sorted(series.items())}
    return pd.DataFrame(columns, index=calendar.index)


def _form_portfolio(
    universe: Mapping[str, PriceWindow],
    embed: EmbedFn,
    cfg: BacktestConfig,
    clustering: ClusterConfig,
    rebalance_date: date,
) -> tuple[Portfolio, ClusterAssignment]:
    if len(universe) == 1:
        assignment = ClusterAssignment(labels={next(iter(universe)): 0}, modularity=0.0, rebalance_date=rebalance_date)
    else:
        embeddings = embed(universe, rebalance_date)
        # 宽松的嵌入函数可能跳过部分股票
        if len(embeddings) < cfg.k2:
            raise InsufficientUniverseError(rebalance_date, len(embeddings), cfg.k2)
        if len(embeddings) == 1:
            assignment = ClusterAssignment(labels={embeddings[0].symbol: 0}, modularity=0.0, rebalance_date=rebalance_date)
        else:
            _, assignment = partition(embeddings, clustering, rebalance_date)
    scores = {symbol: score_window(universe[symbol], cfg.lookback) for symbol in assignment.labels}
    return allocate(assignment, scores, cfg.k2), assignment


def run(
    data: Union[LoadResult, Mapping[str, OhlcSeries]],
    embed: EmbedFn,
    cfg: BacktestConfig,
    calendar: Optional[TradingCalendar] = None,
    clustering: ClusterConfig = ClusterConfig(),
) -> BacktestReport:
    if isinstance(data, LoadResult):
        series, calendar = data.series, calendar or data.calendar
    else:
        series = dict(data)
        calendar = calendar or TradingCalendar.from_series(series.values())

    plans = rebalance_schedule(calendar, cfg)
    if not plans:
        raise DataValidationError("行情区间不足以安排任何调仓（检查 start_date/end_date 与窗口长度）")
    closes = _close_matrix(series, calendar)

    value = 1.0
    points: Dict[pd.Timestamp, float] = {pd.Timestamp(plans[0].rebalance_date): value}
    periods: List[PeriodLog] = []
    for plan in plans:
        bound = logger.bind(rebalance_date=plan.rebalance_date.isoformat())
        when = pd.Timestamp(plan.rebalance_date)
        for stamp in closes.index[(closes.index > max(points)) & (closes.index <= when)]:
            points[stamp] = value

        universe = universe_at(series, calendar, plan.rebalance_date, cfg.formation_window)
        period = PeriodLog(
            rebalance_date=plan.rebalance_date,
            holding_start=plan.holding_dates[0],
            holding_end=plan.holding_dates[-1],
            universe_size=len(universe),
        )
        try:
            if len(universe) < cfg.k2:
                raise InsufficientUniverseError(plan.rebalance_date, len(universe), cfg.k2)
            portfolio, assignment = _form_portfolio(universe, embed, cfg, clustering, plan.rebalance_date)
        except InsufficientUniverseError as exc:
            if not cfg.skip_thin_dates:
                raise
            bound.warning(f"backtest.thin_date_skipped: available={exc.available} k2={cfg.k2}")
            observe_rebalance("skipped")
            period.skipped = f"universe {exc.available} < k2 {cfg.k2}"
            for holding_date in plan.holding_dates:
                points[pd.Timestamp(holding_date)] = value
            periods.append(period)
            continue

        block = closes.iloc[plan.position: plan.position + cfg.holding_period + 1][portfolio.symbols].ffill()
        relative = block / block.iloc[0]
        marks = relative.mean(axis=1).to_numpy()
        period.portfolio = portfolio
        period.assignment = assignment
        period.holding_returns = {symbol: float(relative[symbol].iloc[-1] - 1.0) for symbol in portfolio.symbols}
        period.period_return = float(np.mean(list(period.holding_returns.values())))
        for stamp, mark in zip(block.index[1:], marks[1:]):
            points[stamp] = value * float(mark)
        value = value * (1.0 + period.period_return)
        points[block.index[-1]] = value
        periods.append(period)
        observe_rebalance("invested", assignment.community_count)
        bound.info(
            f"backtest.rebalanced: universe={len(universe)} communities={assignment.community_count} "
            f"holdings={','.join(portfolio.symbols)} period_return={period.period_return:.6f}"
        )

    curve = EquityCurve(pd.Series(points, name="value").sort_index().rename_axis("date"))
    metrics = report_metrics(curve, calendar)
    notes = [UNIVERSE_NOTE, ANNUALIZATION_NOTE]
    if clustering.method == "kmeans":
        notes.append(f"clustering: k-means with k={clustering.n_clusters} seed={clustering.seed} (depends on the seed)")
    return BacktestReport(metrics=metrics, curve=curve, periods=periods, notes=notes)


def trades_frame(periods: Sequence[PeriodLog]) -> pd.DataFrame:
    """每期每只持仓一行：``rebalance_date,holding_start,holding_end,symbol,weight,compound_return,period_return``。"""

    records = []
    for period in periods:
        holdings = period.portfolio.holdings if period.portfolio else ()
        for symbol, weight in holdings:
            records.append(
                {
                    "rebalance_date": period.rebalance_date.isoformat(),
                    "holding_start": period.holding_start.isoformat(),
                    "holding_end": period.holding_end.isoformat(),
                    "symbol": symbol,
                    "weight": weight,
                    "compound_return": period.holding_returns[symbol],
                    "period_return": period.period_return,
                }
            )
    return pd.DataFrame.from_records(
        records,
        columns=[
            "rebalance_date",
            "holding_start",
            "holding_end",
            "symbol",
            "weight",
            "compound_return",
            "period_return",
        ],
    )


__all__ = [
    "BacktestReport",
    "EmbedFn",
    "InsufficientUniverseError",
    "PeriodLog",
    "RebalancePlan",
    "rebalance_schedule",
    "run",
    "trades_frame",
]
