"""夏普打分与跨社区等权选股。"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from datetime import date
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from apps.services.graph_cluster import ClusterAssignment
from apps.services.market_data import PriceWindow

logger = logging.getLogger(__name__)

ZERO_VARIANCE_TOLERANCE = 1e-12


class UniverseTooSmallError(ValueError):
    """可投资股票数少于 k2。"""


@dataclass(frozen=True)
class StockScore:
    symbol: str
    sharpe: Optional[float]  # None 表示波动为 0，排序时置于所有有限值之后
    window_start: date
    window_end: date


@dataclass(frozen=True)
class Portfolio:
    holdings: Tuple[Tuple[str, float], ...]
    formation_date: Optional[date]
    source_clusters: Dict[str, int]
    scores: Dict[str, Optional[float]]

    @property
    def symbols(self) -> List[str]:
        return [symbol for symbol, _ in self.holdings]

    def __len__(self) -> int:
        return len(self.holdings)


def sharpe_ratio(returns: Sequence[float]) -> Optional[float]:
    """均值 / 样本标准差（n−1），无风险利率取 0；σ≈0 时返回 None。"""

    values = np.asarray(returns, dtype=np.float64)
    if values.size < 2:
        raise ValueError(f"至少需要 2 个收益率，实际 {values.size}")
    mean = float(values.mean())
    deviation = float(values.std(ddof=1))
    if deviation <= ZERO_VARIANCE_TOLERANCE * max(1.0, abs(mean)):
        return None
    return mean / deviation


def score_window(window: PriceWindow, lookback: Optional[int] = None) -> StockScore:
    """对窗口内最后 lookback 天的收盘价计算日收益夏普。"""

    closes = window.closes()
    days = lookback or len(closes)
    tail = closes[-days:]
    returns = tail[1:] / tail[:-1] - 1.0
    return StockScore(
        symbol=window.symbol,
        sharpe=sharpe_ratio(returns),
        window_start=window.start_date,
        window_end=window.end_date,
    )


def rank_key(score: StockScore) -> Tuple[bool, float, str]:
    return (score.sharpe is None, -(score.sharpe or 0.0), score.symbol)


def _ranked(symbols: Iterable[str], scores: Mapping[str, StockScore]) -> List[str]:
    return [score.symbol for score in sorted((scores[symbol] for symbol in symbols), key=rank_key)]


def allocate(
    clusters: ClusterAssignment,
    scores: Mapping[str, StockScore],
    k2: int,
) -> Portfolio:
    """[Q, R] = divmod(k2, K1)：每个社区取夏普前 Q，再从全体剩余股票中取前 R。

    社区成员不足 Q 时缺口并入剩余名额；Q = 0 时剩余名额只在各社区的第一名中挑选。
    """

    if k2 < 1:
        raise ValueError("k2 必须为正")
    universe = sorted(clusters.labels)
    unscored = [symbol for symbol in universe if symbol not in scores]
    if unscored:
        raise ValueError(f"缺少夏普打分: {', '.join(unscored)}")
    if len(universe) < k2:
        raise UniverseTooSmallError(f"可投资股票 {len(universe)} 只，少于 k2={k2}")

    communities = clusters.communities()
    per_cluster, remainder = divmod(k2, len(communities))
    selected: List[str] = []
    shortfall = 0
    for members in communities:
        picks = _ranked(members, scores)[:per_cluster]
        shortfall += per_cluster - len(picks)
        selected.extend(picks)

    taken = set(selected)
    if per_cluster == 0:
        pool = [_ranked(members, scores)[0] for members in communities]
    else:
        pool = universe
    extra = _ranked((symbol for symbol in pool if symbol not in taken), scores)[: remainder + shortfall]
    selected.extend(extra)
    if len(selected) != k2:
        raise UniverseTooSmallError(f"只能选出 {len(selected)} 只股票，少于 k2={k2}")

    weight = 1.0 / k2
    ordered = sorted(selected)
    logger.debug(f"portfolio.allocated: k1={len(communities)} q={per_cluster} r={remainder} holdings={ordered}")
    return Portfolio(
        holdings=tuple((symbol, weight) for symbol in ordered),
        formation_date=clusters.rebalance_date,
        source_clusters={symbol: clusters.labels[symbol] for symbol in ordered},
        scores={symbol: scores[symbol].sharpe for symbol in ordered},
    )


def portfolios_frame(portfolios: Sequence[Portfolio]) -> pd.DataFrame:
    """导出 ``formation_date,symbol,weight,community_id,sharpe``。"""

    records = [
        {
            "formation_date": portfolio.formation_date.isoformat() if portfolio.formation_date else "",
            "symbol": symbol,
            "weight": weight,
            "community_id": portfolio.source_clusters[symbol],
            "sharpe": portfolio.scores[symbol],
        }
        for portfolio in portfolios
        for symbol, weight in portfolio.holdings
    ]
    return pd.DataFrame.from_records(
        records, columns=["formation_date", "symbol", "weight", "community_id", "sharpe"]
    )


__all__ = [
    "Portfolio",
    "StockScore",
    "UniverseTooSmallError",
    "allocate",
    "portfolios_frame",
    "rank_key",
    "score_window",
    "sharpe_ratio",
]
