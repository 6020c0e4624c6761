"""错误码定义
- 错误码采用 4 位分组：1xxx 为输入/配置错误，5xxx 为估计/运行错误
- exit_code 为 CLI 进程退出码：2 配置或输入错误，3 实验无效，4 拟合失败
- 使用枚举管理所有错误码
"""
from enum import Enum
from dataclasses import dataclass

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_EXPERIMENT_INVALID = 3
EXIT_FIT_FAILURE = 4


@dataclass(frozen=True)
class ErrorInfo:
    code: int
    exit_code: int
    message: str


class ErrorCode(Enum):
    # Success
    OK = ErrorInfo(0, EXIT_OK, "success")

    # Input / configuration errors
    INVALID_ARGUMENT = ErrorInfo(1000, EXIT_CONFIG, "invalid argument")
    DOMAIN_ERROR = ErrorInfo(1001, EXIT_CONFIG, "argument outside the function domain")
    EMPTY_SAMPLE = ErrorInfo(1002, EXIT_CONFIG, "empty sample")
    CONFIG_ERROR = ErrorInfo(1003, EXIT_CONFIG, "invalid configuration")
    MALFORMED_INPUT = ErrorInfo(1004, EXIT_CONFIG, "malformed input file")

    # Estimation errors
    DEGENERATE_WEIGHTS = ErrorInfo(5000, EXIT_FIT_FAILURE, "total weight is zero")
    CANNOT_FIT = ErrorInfo(5001, EXIT_FIT_FAILURE, "model cannot be fitted")
    CONVERGENCE = ErrorInfo(5002, EXIT_FIT_FAILURE, "iterations did not converge")
    PAIR_FIT = ErrorInfo(5003, EXIT_FIT_FAILURE, "pair-copula fit failed")
    SELECTION = ErrorInfo(5004, EXIT_FIT_FAILURE, "no candidate family could be fitted")
    DECOMPOSITION = ErrorInfo(5005, EXIT_FIT_FAILURE, "matrix decomposition failed")
    DEGENERATE_PREDICTION = ErrorInfo(5006, EXIT_FIT_FAILURE, "all prediction weights are zero")
    TOO_FEW_EVENTS = ErrorInfo(5007, EXIT_FIT_FAILURE, "too few uncensored observations")
    PRECONDITION = ErrorInfo(5008, EXIT_FIT_FAILURE, "sample too small for the requested fit")
    EXPERIMENT_INVALID = ErrorInfo(5100, EXIT_EXPERIMENT_INVALID, "too many excluded replications")

    @property
    def code(self) -> int:
        return self.value.code

    @property
    def exit_code(self) -> int:
        return self.value.exit_code

    @property
    def message(self) -> str:
        return self.value.message
