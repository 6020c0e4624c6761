"""Monte-Carlo 误差指标
estimates 为 B×N 矩阵 (重复 × 评估点)，truths 为长度 N 的真值
"""
from typing import Tuple

import numpy as np

from core.error_codes import ErrorCode
from core.exceptions import EstimationError

MIN_REPLICATIONS_FOR_QUARTILES = 4


def _errors(estimates, truths) -> np.ndarray:
    estimates = np.atleast_2d(np.asarray(estimates, dtype=float))
    truths = np.asarray(truths, dtype=float).ravel()
    if estimates.shape[1] != truths.shape[0]:
        raise EstimationError(
            ErrorCode.INVALID_ARGUMENT,
            f"estimates have {estimates.shape[1]} points but truths have {truths.shape[0]}",
        )
    if estimates.shape[0] == 0:
        raise EstimationError(ErrorCode.EMPTY_SAMPLE, "no replications to aggregate")
    return estimates - truths[None, :]


def imse(estimates, truths) -> float:
    """N 个点上 B 次重复平方误差均值的平均"""
    errors = _errors(estimates, truths)
    return float(np.mean(np.mean(errors ** 2, axis=0)))


def imae_and_dispersion(estimates, truths) -> Tuple[float, float]:
    """
    IMAE = 各点上 |误差| 中位数的平均
    dispersion = 各点上 |误差| 四分位距 (线性插值分位数) 的平均
    """
    errors = np.abs(_errors(estimates, truths))
    if errors.shape[0] < MIN_REPLICATIONS_FOR_QUARTILES:
        raise EstimationError(
            ErrorCode.PRECONDITION,
            f"imae_and_dispersion needs at least {MIN_REPLICATIONS_FOR_QUARTILES} replications, got {errors.shape[0]}",
        )
    median = np.median(errors, axis=0)
    q1, q3 = np.percentile(errors, [25.0, 75.0], axis=0, method="linear")
    return float(np.mean(median)), float(np.mean(q3 - q1))
