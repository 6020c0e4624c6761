"""删失分布估计与逆概率删失权重
- 删失 Kaplan-Meier (Δ=0 视为事件)
- 删失时间 Cox 模型 (指数基线或 Breslow 基线)
- W_i(x) = Δ_i / (1 − Ĝ_C(Y_i−|x))
"""
import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from core.error_codes import ErrorCode
from core.exceptions import EstimationError
from models.schemas import CensoringKind, CoxBaseline, SurvivalConfig
from services.survival.cox import CoxFit, fit_cox
from services.survival.sample import ObservedSample

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class StepSurvival:
    """
    非降右连续阶梯 CDF 估计 Ĝ_C
    jump_times 升序，values[k] 为 jump_times[k] 处 (含) 的取值，首个跳跃前为 0
    """
    jump_times: np.ndarray
    values: np.ndarray

    def cdf(self, t):
        idx = np.searchsorted(self.jump_times, t, side="right")
        result = np.concatenate([[0.0], self.values])[idx]
        return result if np.ndim(result) else float(result)

    def cdf_left(self, t):
        """左极限 Ĝ_C(t−)；最后一个跳跃之后沿用末值"""
        idx = np.searchsorted(self.jump_times, t, side="left")
        result = np.concatenate([[0.0], self.values])[idx]
        return result if np.ndim(result) else float(result)


def kaplan_meier_censoring(sample: ObservedSample) -> StepSurvival:
    """
    删失分布的乘积极限估计
    1 − Ĝ_C(t) = Π_{t_i ≤ t, Δ_i = 0} (1 − d_i / n_i)，n_i = #{Y ≥ t_i}
    """
    if sample.n == 0:
        raise EstimationError(ErrorCode.EMPTY_SAMPLE, "Kaplan-Meier needs n >= 1")
    times, inverse = np.unique(sample.y, return_inverse=True)
    counts = np.bincount(inverse)
    censored = np.bincount(inverse, weights=(~sample.delta).astype(float))
    at_risk = np.cumsum(counts[::-1])[::-1]
    survival = np.cumprod(1.0 - censored / at_risk)
    jumps = censored > 0
    return StepSurvival(jump_times=times[jumps], values=1.0 - survival[jumps])


@dataclass(frozen=True)
class CensoringModel:
    """
    G_C(·|x) 的估计
    - none: Ĝ_C ≡ 0
    - km: 无条件 Kaplan-Meier (忽略 x)
    - cox: 指数基线 G = 1 − exp(−t·r̂·exp(β̂ᵀx)) 或 Breslow 基线 G = 1 − exp(−Ĥ0(t)·exp(β̂ᵀx))
    """
    kind: CensoringKind
    km: Optional[StepSurvival] = None
    cox: Optional[CoxFit] = None
    baseline: CoxBaseline = CoxBaseline.EXPONENTIAL

    def __post_init__(self):
        if (self.kind == CensoringKind.KM) != (self.km is not None):
            raise EstimationError(ErrorCode.INVALID_ARGUMENT, "km field must be set exactly for kind=km")
        if (self.kind == CensoringKind.COX) != (self.cox is not None):
            raise EstimationError(ErrorCode.INVALID_ARGUMENT, "cox field must be set exactly for kind=cox")

    @property
    def cox_beta(self) -> Optional[np.ndarray]:
        return None if self.cox is None else self.cox.beta

    @property
    def cox_baseline_rate(self) -> Optional[float]:
        return None if self.cox is None else self.cox.baseline_rate

    def _cox_cdf(self, t, x, left: bool):
        if x is None:
            raise EstimationError(ErrorCode.INVALID_ARGUMENT, "Cox censoring model needs covariates x")
        risk = float(np.exp(self.cox.linear_predictor(x)[0]))
        t = np.asarray(t, dtype=float)
        if self.baseline == CoxBaseline.BRESLOW:
            cumhaz = self.cox.breslow_cumhaz(t, left=left)
        else:
            cumhaz = np.maximum(t, 0.0) * self.cox.baseline_rate
        return -np.expm1(-cumhaz * risk)

    def cdf(self, t, x=None):
        if self.kind == CensoringKind.NONE:
            return np.zeros_like(np.asarray(t, dtype=float))
        if self.kind == CensoringKind.KM:
            return self.km.cdf(t)
        return self._cox_cdf(t, x, left=False)

    def cdf_left(self, t, x=None):
        """Ĝ_C(t−|x)；指数基线连续，左极限等于函数值"""
        if self.kind == CensoringKind.NONE:
            return np.zeros_like(np.asarray(t, dtype=float))
        if self.kind == CensoringKind.KM:
            return self.km.cdf_left(t)
        return self._cox_cdf(t, x, left=True)


def fit_cox_censoring(sample: ObservedSample, config: SurvivalConfig | None = None) -> CensoringModel:
    """删失时间的 Cox 模型：事件与删失角色互换"""
    config = config or SurvivalConfig()
    censored = ~sample.delta
    if not censored.any():
        raise EstimationError(ErrorCode.CANNOT_FIT, "Cox censoring model needs at least one censored row")
    fit = fit_cox(sample.y, censored, sample.x, config)
    logger.info(
        f"Cox censoring model: beta={np.round(fit.beta, 4).tolist()}, rate={fit.baseline_rate:.4g}, "
        f"baseline={config.cox_baseline.value}"
    )
    return CensoringModel(kind=CensoringKind.COX, cox=fit, baseline=config.cox_baseline)


def fit_censoring_model(
    sample: ObservedSample, kind: CensoringKind, config: SurvivalConfig | None = None
) -> CensoringModel:
    """按 kind 构建删失模型；无删失行时 km/cox 均退化为 Ĝ_C ≡ 0"""
    if kind == CensoringKind.NONE or sample.n_events == sample.n:
        return CensoringModel(kind=CensoringKind.NONE)
    if kind == CensoringKind.KM:
        return CensoringModel(kind=CensoringKind.KM, km=kaplan_meier_censoring(sample))
    return fit_cox_censoring(sample, config)


def censoring_weights(
    sample: ObservedSample, model: CensoringModel, x=None, config: SurvivalConfig | None = None
) -> np.ndarray:
    """
    逆概率删失权重
    W_i = 0 (Δ_i = 0)，否则 1 / max(1 − Ĝ_C(Y_i−|x), ε_G)，截断时记录警告

    Args:
        sample: 训练样本
        model: 已拟合的删失模型
        x: 预测点 (cox 模型必需)

    Returns:
        np.ndarray: 长度 n 的非负权重
    """
    config = config or SurvivalConfig()
    weights = np.zeros(sample.n)
    if model.kind == CensoringKind.NONE:
        weights[sample.delta] = 1.0
        return weights
    survival = 1.0 - np.asarray(model.cdf_left(sample.y[sample.delta], x), dtype=float)
    clamped = survival < config.weight_floor
    if clamped.any():
        logger.warning(
            f"IPC weights clamped for {int(clamped.sum())} event rows "
            f"(1 - G_C below {config.weight_floor:g})"
        )
    weights[sample.delta] = 1.0 / np.maximum(survival, config.weight_floor)
    return weights
