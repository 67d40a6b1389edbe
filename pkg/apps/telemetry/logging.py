"""统一日志获取入口，附带流水线上下文字段（command / symbol / rebalance_date 等）。"""

from __future__ import annotations

import logging
from typing import Any, Dict


class ContextLogger(logging.LoggerAdapter):
    """LoggerAdapter，把绑定的上下文与调用时的 extra 合并，并附加到消息尾部。"""

    def process(self, msg: str, kwargs: Dict[str, Any]):
        extra = kwargs.pop("extra", {})
        merged = {**self.extra, **extra}
        if merged:
            kwargs["extra"] = merged
            context = " ".join(f"{key}={value}" for key, value in sorted(merged.items()))
            msg = f"{msg} [{context}]"
        return msg, kwargs

    def bind(self, **context: Any) -> "ContextLogger":
        """返回追加了上下文的新 adapter，原 adapter 不变。"""

        return ContextLogger(self.logger, {**self.extra, **context})


def get_logger(name: str, **context: Any) -> ContextLogger:
    """返回绑定给定上下文的 LoggerAdapter。"""

    logger = logging.getLogger(name)
    return ContextLogger(logger, context or {})


__all__ = ["ContextLogger", "get_logger"]
