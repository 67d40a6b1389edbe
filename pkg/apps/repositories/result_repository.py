"""回测结果表与净值曲线图的落盘。"""

from __future__ import annotations

from pathlib import Path
from typing import Dict, Optional

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import pandas as pd  # noqa: E402

ASSIGNMENTS = "assignments.csv"
PORTFOLIOS = "portfolios.csv"
EQUITY = "equity.csv"
METRICS = "metrics.csv"
TRADES = "trades.csv"
NOTES = "notes.txt"
PLOT = "equity.svg"
GRAPHS = "graphs/{date}.csv"


class CurveFormatError(ValueError):
    """曲线 CSV 不是 ``date,value`` 格式，或日期/数值无法解析。"""


class ResultRepository:
    def __init__(self, root: Path) -> None:
        self.root = Path(root)

    def path(self, name: str) -> Path:
        return self.root / name

    def write_table(self, name: str, frame: pd.DataFrame) -> Path:
        target = self.path(name)
        target.parent.mkdir(parents=True, exist_ok=True)
        frame.to_csv(target, index=False, encoding="utf-8", lineterminator="\n")
        return target

    def write_equity(self, values: pd.Series) -> Path:
        frame = pd.DataFrame({"date": values.index.strftime("%Y-%m-%d"), "value": values.to_numpy()})
        return self.write_table(EQUITY, frame)

    def read_equity(self) -> pd.Series:
        return self.read_curve(self.path(EQUITY))

    @staticmethod
    def read_curve(path: Path) -> pd.Series:
        """读取 ``date,value`` 曲线 CSV。"""

        if not Path(path).exists():
            raise FileNotFoundError(f"曲线文件不存在: {path}")
        try:
            frame = pd.read_csv(path, dtype={"date": str}, float_precision="round_trip")
        except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as exc:
            raise CurveFormatError(f"{path}: 无法解析 ({exc})") from exc
        if list(frame.columns[:2]) != ["date", "value"]:
            raise CurveFormatError(f"{path}: 需要列 date,value")
        try:
            series = pd.Series(
                frame["value"].astype(float).to_numpy(),
                index=pd.DatetimeIndex(pd.to_datetime(frame["date"], format="%Y-%m-%d"), name="date"),
                name="value",
            )
        except (TypeError, ValueError) as exc:
            raise CurveFormatError(f"{path}: 日期或数值无法解析 ({exc})") from exc
        return series.sort_index()

    def read_metrics(self) -> Dict[str, Optional[float]]:
        path = self.path(METRICS)
        if not path.exists():
            raise FileNotFoundError(f"指标文件不存在: {path}")
        frame = pd.read_csv(path, float_precision="round_trip")
        return {
            str(row.metric): (None if pd.isna(row.value) else float(row.value))
            for row in frame.itertuples(index=False)
        }

    def write_notes(self, notes: list[str]) -> Path:
        self.root.mkdir(parents=True, exist_ok=True)
        target = self.path(NOTES)
        target.write_text("\n".join(notes) + "\n", encoding="utf-8")
        return target

    def write_plot(self, curve: pd.Series, benchmark: Optional[pd.Series] = None, title: str = "") -> Path:
        """净值曲线 SVG；基准曲线在组合起始日重设为 1.0。"""

        plt.rcParams["svg.hashsalt"] = "chartfolio"
        figure, axis = plt.subplots(figsize=(9, 4.5))
        try:
            axis.plot(curve.index, curve.to_numpy(), label="portfolio", color="#1f77b4", linewidth=1.2)
            if benchmark is not None and not benchmark.empty:
                window = benchmark.loc[benchmark.index >= curve.index[0]]
                if not window.empty:
                    axis.plot(window.index, window.to_numpy() / window.iloc[0], label="benchmark", color="#7f7f7f", linewidth=1.0)
            axis.axhline(1.0, color="#cccccc", linewidth=0.8)
            axis.set_ylabel("value")
            axis.set_title(title)
            axis.legend(loc="upper left")
            axis.grid(alpha=0.3)
            figure.autofmt_xdate()
            target = self.path(PLOT)
            self.root.mkdir(parents=True, exist_ok=True)
            figure.savefig(target, format="svg", metadata={"Date": None})
        finally:
            plt.close(figure)
        return target


__all__ = [
    "ASSIGNMENTS",
    "CurveFormatError",
    "EQUITY",
    "GRAPHS",
    "METRICS",
    "NOTES",
    "PLOT",
    "PORTFOLIOS",
    "ResultRepository",
    "TRADES",
]
