"""自定义异常定义"""
from typing import Any, Optional
from core.error_codes import ErrorCode


class EstimationError(Exception):
    """
    估计流程异常
    携带 ErrorCode、消息和诊断数据 (迭代值、边标识、折编号等)，
    由 CLI 异常处理器捕获并映射为退出码
    """
    def __init__(
        self,
        error_code: ErrorCode,
        message: Optional[str] = None,
        data: Any = None
    ):
        self.error_code = error_code
        self.message = message or error_code.message
        self.data = data
        super().__init__(self.message)

    def annotate(self, **context: Any) -> "EstimationError":
        """返回附加了上下文信息的新异常，原诊断数据保留在 cause 字段"""
        data = dict(context)
        if self.data is not None:
            data["cause"] = self.data
        prefix = ", ".join(f"{k}={v}" for k, v in context.items())
        return EstimationError(self.error_code, message=f"[{prefix}] {self.message}", data=data)
