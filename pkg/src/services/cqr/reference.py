"""比较用预测器
- Cox 参考估计：T 的 Cox 模型 + 指数基线，m̂(x) = −log(1−τ)·exp(−β̂ᵀx)/r̂ (仅供参考)
- 无条件分位数：IPCW 加权分位数，不依赖协变量
"""
import logging
from dataclasses import dataclass

import numpy as np

from models.schemas import CensoringKind, SurvivalConfig
from services.stats.core import weighted_quantile
from services.survival.censoring import censoring_weights, fit_censoring_model
from services.survival.cox import CoxFit, fit_cox
from services.survival.sample import ObservedSample

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class CoxQuantileReference:
    fit: CoxFit
    reference_only: bool = True

    def predict(self, x, tau: float) -> float:
        eta = float(self.fit.linear_predictor(np.asarray(x, dtype=float).ravel())[0])
        return float(-np.log1p(-tau) * np.exp(-eta) / self.fit.baseline_rate)

    def predict_many(self, x, taus) -> np.ndarray:
        return np.array([self.predict(x, t) for t in taus])


def fit_cox_reference(sample: ObservedSample, config: SurvivalConfig | None = None) -> CoxQuantileReference:
    fit = fit_cox(sample.y, sample.delta, sample.x, config or SurvivalConfig())
    logger.debug(f"Cox reference: beta={np.round(fit.beta, 4).tolist()}, rate={fit.baseline_rate:.4g}")
    return CoxQuantileReference(fit=fit)


@dataclass(frozen=True)
class UnconditionalQuantile:
    """常数预测器：KM 逆概率加权的无条件 τ 分位数"""
    y_events: np.ndarray
    weights: np.ndarray

    def predict(self, x, tau: float) -> float:
        return weighted_quantile(self.y_events, self.weights, tau)

    def predict_many(self, x, taus) -> np.ndarray:
        return np.array([self.predict(x, t) for t in taus])


def fit_unconditional(sample: ObservedSample, config: SurvivalConfig | None = None) -> UnconditionalQuantile:
    config = config or SurvivalConfig()
    model = fit_censoring_model(sample, CensoringKind.KM, config)
    weights = censoring_weights(sample, model, None, config)
    return UnconditionalQuantile(y_events=sample.y[sample.delta], weights=weights[sample.delta])
