"""统计基础函数
- 标准正态分布函数与分位数
- 重标定经验分布函数、伪观测值、Kendall tau
- 检验损失 (check loss) 与加权分位数求解
"""
import logging
from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np
from scipy import special, stats

from core.error_codes import ErrorCode
from core.exceptions import EstimationError

logger = logging.getLogger(__name__)

Probability = float

_SQRT_2PI = np.sqrt(2.0 * np.pi)


@dataclass(frozen=True)
class WeightedPoint:
    """加权观测点 (响应值, 非负权重)"""
    value: float
    weight: float


# --- 正态分布 ---

def std_normal_cdf(x):
    """Φ(x)，接受标量或数组，±inf 映射为 0/1"""
    return special.ndtr(x)


def std_normal_pdf(x):
    x = np.asarray(x, dtype=float)
    return np.exp(-0.5 * x * x) / _SQRT_2PI


def std_normal_quantile(p):
    """
    Φ⁻¹(p)，p ∈ (0, 1)
    ndtri 初值后做一步 Halley 修正

    Raises:
        EstimationError: p 不在开区间 (0, 1) 内
    """
    arr = np.asarray(p, dtype=float)
    if not np.all((arr > 0.0) & (arr < 1.0)):
        raise EstimationError(
            ErrorCode.DOMAIN_ERROR,
            "std_normal_quantile requires 0 < p < 1",
            data={"p": arr.tolist()},
        )
    x = special.ndtri(arr)
    err = special.ndtr(x) - arr
    u = err * _SQRT_2PI * np.exp(0.5 * x * x)
    x = x - u / (1.0 + 0.5 * x * u)
    return x if x.ndim else float(x)


# --- 经验分布 ---

class RescaledEcdf:
    """
    重标定经验分布函数 F̂(t) = #{保留值 ≤ t} / (n_u + 1)
    取值在 [0, n_u/(n_u+1)]，右连续阶梯函数
    """

    def __init__(self, sample: Sequence[float], keep: Sequence[bool] | None = None):
        values = np.asarray(sample, dtype=float)
        mask = np.ones(values.shape[0], dtype=bool) if keep is None else np.asarray(keep, dtype=bool)
        if mask.shape[0] != values.shape[0]:
            raise EstimationError(ErrorCode.INVALID_ARGUMENT, "sample and keep lengths differ")
        if not mask.any():
            raise EstimationError(ErrorCode.EMPTY_SAMPLE, "rescaled_ecdf needs at least one kept value")
        self.sorted_values = np.sort(values[mask])
        self.n_kept = int(self.sorted_values.shape[0])

    @property
    def lower(self) -> float:
        return 1.0 / (self.n_kept + 1)

    @property
    def upper(self) -> float:
        return self.n_kept / (self.n_kept + 1)

    def __call__(self, t):
        counts = np.searchsorted(self.sorted_values, t, side="right")
        result = counts / (self.n_kept + 1.0)
        return result if np.ndim(result) else float(result)

    def clamped(self, t):
        """训练范围外的点截断到 [1/(n_u+1), n_u/(n_u+1)]"""
        result = np.clip(self(t), self.lower, self.upper)
        return result if np.ndim(result) else float(result)


def rescaled_ecdf(sample: Sequence[float], keep: Sequence[bool] | None = None) -> RescaledEcdf:
    return RescaledEcdf(sample, keep)


def pseudo_observations(columns) -> np.ndarray:
    """
    按列计算 rank/(n+1)，并列取平均秩

    Args:
        columns: n×m 矩阵 (或长度 n 的向量)

    Returns:
        np.ndarray: 与输入同形状的伪观测值
    """
    data = np.asarray(columns, dtype=float)
    if data.shape[0] == 0:
        raise EstimationError(ErrorCode.EMPTY_SAMPLE, "pseudo_observations needs n >= 1")
    if np.isnan(data).any():
        raise EstimationError(ErrorCode.INVALID_ARGUMENT, "pseudo_observations input contains NaN")
    n = data.shape[0]
    return stats.rankdata(data, method="average", axis=0) / (n + 1.0)


def kendall_tau(u: Sequence[float], v: Sequence[float]) -> float:
    """tie 校正的 Kendall tau-b；常数列返回 0"""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if u.shape != v.shape:
        raise EstimationError(ErrorCode.INVALID_ARGUMENT, f"kendall_tau length mismatch: {u.shape} vs {v.shape}")
    if u.shape[0] < 2:
        raise EstimationError(ErrorCode.INVALID_ARGUMENT, "kendall_tau needs at least two observations")
    tau = stats.kendalltau(u, v, variant="b").statistic
    if not np.isfinite(tau):
        return 0.0
    return float(tau)


# --- 分位数 ---

def check_loss(u, tau: float):
    """ρ_τ(u) = u (τ − 1(u < 0))"""
    u = np.asarray(u, dtype=float)
    return u * (tau - (u < 0.0))


def _validate_weights(values, weights) -> Tuple[np.ndarray, np.ndarray]:
    values = np.asarray(values, dtype=float)
    weights = np.asarray(weights, dtype=float)
    if values.shape != weights.shape or values.ndim != 1:
        raise EstimationError(ErrorCode.INVALID_ARGUMENT, "values and weights must be 1-d of equal length")
    if not np.all(np.isfinite(weights)) or np.any(weights < 0):
        raise EstimationError(ErrorCode.INVALID_ARGUMENT, "weights must be finite and nonnegative")
    return values, weights


def _check_tau(tau: float) -> None:
    if not 0.0 < tau < 1.0:
        raise EstimationError(ErrorCode.DOMAIN_ERROR, f"tau={tau} outside (0, 1)")


def weighted_quantiles(values, weights, taus: Sequence[float]) -> np.ndarray:
    """
    多个分位水平共享一次排序的加权分位数
    对每个 τ 返回使累计权重 ≥ τ·总权重 的最小观测值

    Raises:
        EstimationError: 总权重为 0 (DEGENERATE_WEIGHTS) 或 τ 越界
    """
    values, weights = _validate_weights(values, weights)
    taus = np.atleast_1d(np.asarray(taus, dtype=float))
    for tau in taus:
        _check_tau(float(tau))
    order = np.argsort(values, kind="stable")
    cum = np.cumsum(weights[order])
    if cum.shape[0] == 0 or cum[-1] <= 0.0:
        raise EstimationError(ErrorCode.DEGENERATE_WEIGHTS, "total weight is zero")
    idx = np.searchsorted(cum, taus * cum[-1], side="left")
    idx = np.minimum(idx, cum.shape[0] - 1)
    return values[order][idx]


def weighted_quantile(values, weights, tau: float) -> float:
    """单个 τ 的加权分位数 (检验损失在观测值集合上的最小化者，取最小者)"""
    return float(weighted_quantiles(values, weights, [tau])[0])


def weighted_quantile_of_points(points: Sequence[WeightedPoint], tau: float) -> float:
    values = [p.value for p in points]
    weights = [p.weight for p in points]
    return weighted_quantile(values, weights, tau)
