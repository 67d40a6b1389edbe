from __future__ import annotations

from typing import Any, Dict

from apps.pipeline.options import PipelineCommand, default_help
from apps.schemas.config import BacktestConfig, PipelineConfig
from apps.services import pipeline_service

_DEFAULTS = BacktestConfig()


class Command(PipelineCommand):
    help = "按滚动建仓/持有协议回测，写出指标、净值曲线、持仓与交易明细。"
    command_name = "backtest"
    locks_report_dir = True

    def add_command_arguments(self, parser) -> None:
        parser.add_argument("--k2", type=int, default=None, help=default_help("组合股票数", _DEFAULTS.k2))
        parser.add_argument("--start", default=None, help="回测开始日期 YYYY-MM-DD")
        parser.add_argument("--end", default=None, help="回测结束日期 YYYY-MM-DD")
        parser.add_argument("--skip-thin-dates", action="store_true", help="股票不足 k2 的调仓日空仓而不是中止")
        parser.add_argument("--paper-mode", action="store_true", help="在报告中标注训练数据覆盖整个区间")

    def overrides(self, options: Dict[str, Any]) -> Dict[str, Any]:
        return {
            "backtest.k2": options.get("k2"),
            "backtest.start_date": options.get("start"),
            "backtest.end_date": options.get("end"),
            "backtest.skip_thin_dates": True if options.get("skip_thin_dates") else None,
            "backtest.paper_mode": True if options.get("paper_mode") else None,
        }

    def run(self, config: PipelineConfig, options: Dict[str, Any]) -> None:
        report = pipeline_service.run_backtest(config)
        invested = sum(1 for period in report.periods if period.portfolio is not None)
        self.stdout.write(
            f"backtest done: rebalances={len(report.periods)} invested={invested} "
            f"total_return={report.metrics.total_return:.6f} -> {config.paths.report_dir}"
        )
