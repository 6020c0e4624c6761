"""留一交叉验证预测误差
PE(m̂_τ) = median_{i: Δ_i = 1} ρ_τ(Y_i − m̂_τ^{−i}(X_i))
- 带宽/结构/族在全样本上选择一次，各折复用
- 删失模型与边缘在每折重新估计
- 拟合器为可 pickle 的类，支持进程池并行
"""
import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Protocol, Sequence

import numpy as np

from core.error_codes import ErrorCode
from core.exceptions import EstimationError
from core.parallel import parallel_map
from models.schemas import EstimatorConfig, SurvivalConfig
from services.cqr.estimator import fit_estimator
from services.cqr.reference import fit_cox_reference, fit_unconditional
from services.stats.core import check_loss
from services.survival.sample import ObservedSample
from services.vine.vine import VineSelection

logger = logging.getLogger(__name__)


class Predictor(Protocol):
    def predict_many(self, x, taus: Sequence[float]) -> np.ndarray: ...


class Fitter(Protocol):
    label: str

    def prepare(self, sample: ObservedSample) -> "Fitter": ...

    def fit(self, sample: ObservedSample) -> Predictor: ...


@dataclass(frozen=True)
class CopulaFitter:
    """copula 估计器；prepare() 在全样本上完成一次选择"""
    config: EstimatorConfig
    selection: Optional[VineSelection] = None

    @property
    def label(self) -> str:
        return self.config.label

    def prepare(self, sample: ObservedSample) -> "CopulaFitter":
        estimator = fit_estimator(sample, config=self.config)
        return CopulaFitter(config=self.config, selection=estimator.vine.selection())

    def fit(self, sample: ObservedSample) -> Predictor:
        return fit_estimator(sample, config=self.config, selection=self.selection)


@dataclass(frozen=True)
class UnconditionalFitter:
    survival: SurvivalConfig = field(default_factory=SurvivalConfig)
    label: str = "unconditional"

    def prepare(self, sample: ObservedSample) -> "UnconditionalFitter":
        return self

    def fit(self, sample: ObservedSample) -> Predictor:
        return fit_unconditional(sample, self.survival)


@dataclass(frozen=True)
class CoxReferenceFitter:
    survival: SurvivalConfig = field(default_factory=SurvivalConfig)
    label: str = "cox-ref"

    def prepare(self, sample: ObservedSample) -> "CoxReferenceFitter":
        return self

    def fit(self, sample: ObservedSample) -> Predictor:
        return fit_cox_reference(sample, self.survival)


@dataclass(frozen=True)
class _FunctionPredictor:
    fn: Callable[[np.ndarray, float], float]

    def predict_many(self, x, taus) -> np.ndarray:
        return np.array([self.fn(np.asarray(x, dtype=float), t) for t in taus])


@dataclass(frozen=True)
class FunctionFitter:
    """已知函数 m(x, τ) 作为预测器 (不依赖数据)"""
    fn: Callable[[np.ndarray, float], float]
    label: str = "function"

    def prepare(self, sample: ObservedSample) -> "FunctionFitter":
        return self

    def fit(self, sample: ObservedSample) -> Predictor:
        return _FunctionPredictor(self.fn)


@dataclass(frozen=True)
class _LeaveOneOut:
    sample: ObservedSample
    taus: tuple
    fitter: Fitter

    def __call__(self, index: int) -> np.ndarray:
        try:
            model = self.fitter.fit(self.sample.without(index))
            predictions = model.predict_many(self.sample.x[index], self.taus)
        except EstimationError as exc:
            raise exc.annotate(fold=index) from exc
        return check_loss(self.sample.y[index] - predictions, np.asarray(self.taus))


def cv_prediction_errors(sample: ObservedSample, taus: Sequence[float], fitter: Fitter,
                         workers: int = 1) -> Dict[float, float]:
    """多个 τ 共享每折的拟合，返回 τ -> PE"""
    taus = tuple(float(t) for t in taus)
    folds: List[int] = np.flatnonzero(sample.delta).tolist()
    if not folds:
        raise EstimationError(ErrorCode.TOO_FEW_EVENTS, "prediction error needs at least one uncensored row")
    prepared = fitter.prepare(sample)
    logger.info(f"Leave-one-out PE for {prepared.label}: {len(folds)} folds, taus={list(taus)}")
    losses = np.array(parallel_map(_LeaveOneOut(sample, taus, prepared), folds, workers=workers))
    return {tau: float(np.median(losses[:, k])) for k, tau in enumerate(taus)}


def cv_prediction_error(sample: ObservedSample, tau: float, fitter: Fitter, workers: int = 1) -> float:
    return cv_prediction_errors(sample, [tau], fitter, workers)[float(tau)]
