"""嵌入余弦相似度图 + 确定性贪心模块度聚类。

聚类规则：
1. 每个节点初始自成社区，社区编号 = 成员中最小的节点下标（节点按 ticker 排序）
2. 每轮合并 ΔQ 最大的社区对，ΔQ 差在 1e-12 以内视为并列，取 (较小编号, 较大编号) 字典序最小的一对
3. 最大 ΔQ ≤ 0 时停止，按社区最小成员 ticker 顺序重新编号为 0..K-1

对照用的 kmeans_cluster 需预设簇数并依赖随机初始化，只在 cluster.method=kmeans 时使用。
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from datetime import date
from typing import Dict, List, Mapping, Optional, Sequence, Tuple, Union

import networkx as nx
import numpy as np
import pandas as pd
from sklearn.cluster import KMeans

from apps.schemas.config import ClusterConfig
from apps.services.autoencoder.inference import Embedding

logger = logging.getLogger(__name__)

TIE_TOLERANCE = 1e-12


class EmbeddingMismatchError(ValueError):
    """嵌入维度或 model_id 不一致，或存在零向量。"""


@dataclass(frozen=True, eq=False)
class SimilarityGraph:
    nodes: Tuple[str, ...]
    weights: np.ndarray
    model_id: str = ""

    def __post_init__(self) -> None:
        if list(self.nodes) != sorted(self.nodes) or len(set(self.nodes)) != len(self.nodes):
            raise ValueError("节点必须按 ticker 排序且不重复")
        n = len(self.nodes)
        weights = self.weights
        if weights.shape != (n, n):
            raise ValueError(f"权重矩阵形状 {weights.shape} 与节点数 {n} 不符")
        if not np.isfinite(weights).all() or (weights < 0).any():
            raise ValueError("权重必须有限且非负")
        if not np.array_equal(weights, weights.T) or np.any(np.diag(weights) != 0):
            raise ValueError("权重矩阵必须对称且对角为 0")

    @property
    def total_weight(self) -> float:
        """m = ½·Σ_ij w_ij"""

        return float(self.weights.sum()) / 2.0

    @property
    def degrees(self) -> np.ndarray:
        return self.weights.sum(axis=1)

    def __len__(self) -> int:
        return len(self.nodes)

    def to_networkx(self) -> nx.Graph:
        graph = nx.Graph()
        graph.add_nodes_from(self.nodes)
        rows, cols = np.nonzero(np.triu(self.weights, k=1))
        graph.add_weighted_edges_from(
            (self.nodes[i], self.nodes[j], float(self.weights[i, j])) for i, j in zip(rows, cols)
        )
        return graph

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.weights, index=list(self.nodes), columns=list(self.nodes))


@dataclass(frozen=True)
class MergeStep:
    left: str
    right: str
    gain: float


@dataclass(frozen=True)
class ClusterAssignment:
    labels: Dict[str, int]
    modularity: float
    rebalance_date: Optional[date] = None
    merges: Tuple[MergeStep, ...] = field(default=(), compare=False)

    @property
    def community_count(self) -> int:
        return max(self.labels.values()) + 1 if self.labels else 0

    def members(self, community: int) -> List[str]:
        return sorted(symbol for symbol, label in self.labels.items() if label == community)

    def communities(self) -> List[List[str]]:
        return [self.members(community) for community in range(self.community_count)]


def build_graph(embeddings: Sequence[Embedding]) -> SimilarityGraph:
    """w_ij = max(0, cos(v_i, v_j))，对角为 0，节点按 ticker 排序。"""

    ordered = sorted(embeddings, key=lambda item: item.symbol)
    symbols = [item.symbol for item in ordered]
    if len(symbols) < 2:
        raise EmbeddingMismatchError(f"至少需要 2 只股票，实际 {len(symbols)}")
    duplicated = sorted({symbol for symbol in symbols if symbols.count(symbol) > 1})
    if duplicated:
        raise EmbeddingMismatchError(f"重复的 ticker: {', '.join(duplicated)}")
    dims = {len(item.vector) for item in ordered}
    if len(dims) != 1:
        raise EmbeddingMismatchError(f"嵌入维度不一致: {sorted(dims)}")
    model_ids = {item.model_id for item in ordered}
    if len(model_ids) != 1:
        raise EmbeddingMismatchError(f"model_id 不一致: {sorted(model_ids)}")

    matrix = np.vstack([np.asarray(item.vector, dtype=np.float64) for item in ordered])
    norms = np.linalg.norm(matrix, axis=1)
    zero = [symbol for symbol, norm in zip(symbols, norms) if norm == 0.0]
    if zero:
        raise EmbeddingMismatchError(f"零向量嵌入: {', '.join(zero)}")

    unit = matrix / norms[:, None]
    cosine = unit @ unit.T
    weights = np.clip((cosine + cosine.T) / 2.0, 0.0, 1.0)
    np.fill_diagonal(weights, 0.0)
    return SimilarityGraph(nodes=tuple(symbols), weights=weights, model_id=model_ids.pop())


Labels = Union[Mapping[str, int], Sequence[int]]


def _label_array(graph: SimilarityGraph, labels: Labels) -> np.ndarray:
    if isinstance(labels, Mapping):
        missing = [node for node in graph.nodes if node not in labels]
        if missing:
            raise ValueError(f"划分未覆盖节点: {', '.join(missing)}")
        return np.array([labels[node] for node in graph.nodes])
    array = np.asarray(labels)
    if array.shape != (len(graph),):
        raise ValueError("划分长度与节点数不符")
    return array


def modularity(graph: SimilarityGraph, labels: Labels) -> float:
    """Q = (1/2m)·Σ_ij [w_ij − s_i·s_j/(2m)]·δ(c_i, c_j)；m = 0 时 Q = 0。"""

    array = _label_array(graph, labels)
    two_m = 2.0 * graph.total_weight
    if two_m == 0.0:
        return 0.0
    degrees = graph.degrees
    quality = 0.0
    for community in np.unique(array):
        mask = array == community
        inside = graph.weights[np.ix_(mask, mask)].sum()
        strength = degrees[mask].sum()
        quality += inside / two_m - (strength / two_m) ** 2
    return float(quality)


def merge_gain(graph: SimilarityGraph, labels: Labels, a: int, b: int) -> float:
    """合并社区 a 与 b 的增量 ΔQ = 2·(e_ab − a_a·a_b)。"""

    array = _label_array(graph, labels)
    two_m = 2.0 * graph.total_weight
    if two_m == 0.0 or a == b:
        return 0.0
    in_a, in_b = array == a, array == b
    between = graph.weights[np.ix_(in_a, in_b)].sum() / two_m
    degrees = graph.degrees
    return float(2.0 * (between - (degrees[in_a].sum() / two_m) * (degrees[in_b].sum() / two_m)))


def cluster(graph: SimilarityGraph, rebalance_date: Optional[date] = None) -> ClusterAssignment:
    n = len(graph)
    two_m = 2.0 * graph.total_weight
    members: Dict[int, List[int]] = {index: [index] for index in range(n)}
    merges: List[MergeStep] = []

    if two_m > 0.0:
        fractions = graph.weights / two_m
        strengths = graph.degrees / two_m
        active = list(range(n))
        while len(active) > 1:
            index = np.array(active)
            gains = 2.0 * (fractions[np.ix_(index, index)] - np.outer(strengths[index], strengths[index]))
            upper = np.triu(np.ones_like(gains, dtype=bool), k=1)
            best = gains[upper].max()
            if best <= 0.0:
                break
            rows, cols = np.nonzero(upper & (gains >= best - TIE_TOLERANCE) & (gains > 0.0))
            # np.nonzero 按行优先返回，首个即字典序最小的 (较小编号, 较大编号)
            keep, drop = int(index[rows[0]]), int(index[cols[0]])
            gain = float(gains[rows[0], cols[0]])

            fractions[keep, :] += fractions[drop, :]
            fractions[:, keep] += fractions[:, drop]
            strengths[keep] += strengths[drop]
            members[keep].extend(members.pop(drop))
            active.remove(drop)
            merges.append(MergeStep(graph.nodes[keep], graph.nodes[drop], gain))

    labels: Dict[str, int] = {}
    for dense, community in enumerate(sorted(members)):
        for node in members[community]:
            labels[graph.nodes[node]] = dense
    quality = modularity(graph, labels)
    logger.debug(f"graph_cluster.done: nodes={n} communities={len(members)} q={quality:.6f}")
    return ClusterAssignment(
        labels=dict(sorted(labels.items())),
        modularity=quality,
        rebalance_date=rebalance_date,
        merges=tuple(merges),
    )


def kmeans_cluster(
    embeddings: Sequence[Embedding],
    n_clusters: int,
    seed: int,
    *,
    n_init: int = 10,
    rebalance_date: Optional[date] = None,
) -> ClusterAssignment:
    """在单位化嵌入上做 k-means（欧氏距离与余弦相似度单调对应）。

    簇数超过股票数时取股票数；相同 seed 与输入得到相同划分，不同 seed 可能不同。
    编号规则与 cluster 一致：按社区最小成员 ticker 顺序为 0..K-1。
    """

    graph = build_graph(embeddings)
    by_symbol = {item.symbol: np.asarray(item.vector, dtype=np.float64) for item in embeddings}
    matrix = np.vstack([by_symbol[symbol] for symbol in graph.nodes])
    unit = matrix / np.linalg.norm(matrix, axis=1)[:, None]
    k = min(n_clusters, len(graph))
    raw = KMeans(n_clusters=k, n_init=n_init, random_state=seed).fit_predict(unit)

    dense: Dict[int, int] = {}
    labels: Dict[str, int] = {}
    for symbol, label in zip(graph.nodes, raw):
        labels[symbol] = dense.setdefault(int(label), len(dense))
    quality = modularity(graph, labels)
    logger.debug(f"graph_cluster.kmeans_done: nodes={len(graph)} k={k} seed={seed} q={quality:.6f}")
    return ClusterAssignment(labels=labels, modularity=quality, rebalance_date=rebalance_date)


def partition(
    embeddings: Sequence[Embedding],
    cfg: ClusterConfig,
    rebalance_date: Optional[date] = None,
) -> Tuple[SimilarityGraph, ClusterAssignment]:
    """按 cfg.method 聚类，同时返回相似度图供导出。"""

    graph = build_graph(embeddings)
    if cfg.method == "kmeans":
        assignment = kmeans_cluster(
            embeddings, cfg.n_clusters, cfg.seed, n_init=cfg.n_init, rebalance_date=rebalance_date
        )
        return graph, assignment
    return graph, cluster(graph, rebalance_date=rebalance_date)


def assignments_frame(assignments: Sequence[ClusterAssignment]) -> pd.DataFrame:
    """导出 ``rebalance_date,symbol,community_id``。"""

    records = [
        {
            "rebalance_date": assignment.rebalance_date.isoformat() if assignment.rebalance_date else "",
            "symbol": symbol,
            "community_id": label,
        }
        for assignment in assignments
        for symbol, label in assignment.labels.items()
    ]
    return pd.DataFrame.from_records(records, columns=["rebalance_date", "symbol", "community_id"])


__all__ = [
    "ClusterAssignment",
    "EmbeddingMismatchError",
    "MergeStep",
    "SimilarityGraph",
    "assignments_frame",
    "build_graph",
    "cluster",
    "kmeans_cluster",
    "merge_gain",
    "modularity",
    "partition",
]
