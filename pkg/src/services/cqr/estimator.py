"""copula 条件分位数估计器
- 完整数据：权重 ĉ(F̂_Y(Y_i), F̂(x))
- 右删失：权重 Ŵ_i(x) · ĉ(F̂^u_Y(Y_i), F̂^u(x))，仅事件行参与
- 同一 x 的权重向量在各 τ 之间共享，分位数曲线天然单调
"""
import logging
from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np

from core.error_codes import ErrorCode
from core.exceptions import EstimationError
from models.schemas import CensoringKind, CopulaMode, EstimatorConfig
from services.stats.core import RescaledEcdf, pseudo_observations, weighted_quantile, weighted_quantiles
from services.survival.censoring import CensoringModel, censoring_weights, fit_censoring_model
from services.survival.sample import ObservedSample
from services.vine.vine import VineCopulaModel, VineSelection, describe_vine, fit_vine

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class QuantileCurve:
    taus: Tuple[float, ...]
    values: Tuple[float, ...]

    def is_monotone(self) -> bool:
        return all(a <= b for a, b in zip(self.values, self.values[1:]))


@dataclass(frozen=True)
class QuantileEstimator:
    """拟合后的估计器 (只读，可在进程间共享)"""
    config: EstimatorConfig
    vine: VineCopulaModel
    censoring: CensoringModel
    marginal_y: RescaledEcdf
    marginal_x: Tuple[RescaledEcdf, ...]
    sample: ObservedSample
    u0_events: np.ndarray

    @property
    def y_events(self) -> np.ndarray:
        return self.sample.y[self.sample.delta]

    @property
    def d(self) -> int:
        return self.sample.d

    def pseudo_x(self, x) -> np.ndarray:
        """预测点的边缘变换，截断到 [1/(n_u+1), n_u/(n_u+1)]"""
        x = np.asarray(x, dtype=float).ravel()
        if x.shape[0] != self.d:
            raise EstimationError(ErrorCode.INVALID_ARGUMENT, f"x must have {self.d} components, got {x.shape[0]}")
        return np.array([marginal.clamped(x[j]) for j, marginal in enumerate(self.marginal_x)])

    def predict(self, x, tau: float) -> float:
        return predict(self, x, tau)

    def predict_many(self, x, taus: Sequence[float]) -> np.ndarray:
        return np.asarray(predict_curve(self, x, taus).values)

    def describe(self) -> dict:
        description = {
            "mode": self.config.mode.value,
            "censoring": self.censoring.kind.value,
            "n": self.sample.n,
            "n_events": self.sample.n_events,
            "vine": describe_vine(self.vine),
        }
        if self.censoring.kind == CensoringKind.COX:
            description["censoring_cox"] = {
                "beta": self.censoring.cox_beta.tolist(),
                "baseline": self.censoring.baseline.value,
                "baseline_rate": self.censoring.cox_baseline_rate,
            }
        return description


def fit_estimator(
    sample: ObservedSample,
    mode: CopulaMode | None = None,
    censoring_kind: CensoringKind | None = None,
    config: EstimatorConfig | None = None,
    selection: VineSelection | None = None,
) -> QuantileEstimator:
    """
    组装估计器
    - 边缘与伪观测只用事件行 (n_u 个)
    - vine 在事件行上拟合，删失模型在全样本上拟合

    Raises:
        EstimationError: 事件数 < min_events (TOO_FEW_EVENTS)
    """
    config = config or EstimatorConfig()
    updates = {}
    if mode is not None:
        updates["mode"] = CopulaMode(mode)
    if censoring_kind is not None:
        updates["censoring"] = CensoringKind(censoring_kind)
    if updates:
        config = config.model_copy(update=updates)

    n_u = sample.n_events
    if n_u < config.min_events:
        raise EstimationError(
            ErrorCode.TOO_FEW_EVENTS,
            f"estimator needs at least {config.min_events} uncensored rows, got {n_u}",
            data={"n_events": n_u, "n": sample.n},
        )
    events = sample.delta
    marginal_y = RescaledEcdf(sample.y, events)
    marginal_x = tuple(RescaledEcdf(sample.x[:, j], events) for j in range(sample.d))
    pseudo = pseudo_observations(np.column_stack([sample.y[events], sample.x[events]]))
    vine = fit_vine(pseudo[:, 0], pseudo[:, 1:], config.mode, config.vine, selection)
    censoring = fit_censoring_model(sample, config.censoring, config.survival)
    logger.debug(f"Fitted {config.label} estimator: n={sample.n}, n_u={n_u}")
    return QuantileEstimator(
        config=config,
        vine=vine,
        censoring=censoring,
        marginal_y=marginal_y,
        marginal_x=marginal_x,
        sample=sample,
        u0_events=np.asarray(marginal_y(sample.y[events]), dtype=float),
    )


def prediction_weights(estimator: QuantileEstimator, x) -> np.ndarray:
    """事件行上的权重 w_i = Ŵ_i(x) · ĉ(F̂_Y(Y_i), F̂(x))"""
    u_x = estimator.pseudo_x(x)
    copula = estimator.vine.density(estimator.u0_events, u_x[None, :])
    ipcw = censoring_weights(estimator.sample, estimator.censoring, np.asarray(x, dtype=float),
                             estimator.config.survival)
    weights = ipcw[estimator.sample.delta] * copula
    bad = ~np.isfinite(weights)
    if bad.any():
        logger.warning(
            f"Dropped {int(bad.sum())} of {weights.shape[0]} non-finite prediction weights at x={np.asarray(x).tolist()}")
        weights = np.where(bad, 0.0, weights)
    return weights


def _checked_weights(estimator: QuantileEstimator, x) -> np.ndarray:
    weights = prediction_weights(estimator, x)
    if not np.any(weights > 0):
        raise EstimationError(
            ErrorCode.DEGENERATE_PREDICTION,
            f"all prediction weights are zero at x={np.asarray(x).tolist()}",
            data={"x": np.asarray(x).tolist()},
        )
    return weights


def predict(estimator: QuantileEstimator, x, tau: float) -> float:
    weights = _checked_weights(estimator, x)
    return weighted_quantile(estimator.y_events, weights, tau)


def predict_curve(estimator: QuantileEstimator, x, taus: Sequence[float]) -> QuantileCurve:
    """一次计算权重，所有 τ 共享"""
    taus = [float(t) for t in taus]
    if any(a > b for a, b in zip(taus, taus[1:])):
        raise EstimationError(ErrorCode.INVALID_ARGUMENT, "taus must be sorted")
    weights = _checked_weights(estimator, x)
    values = weighted_quantiles(estimator.y_events, weights, taus)
    return QuantileCurve(taus=tuple(taus), values=tuple(float(v) for v in values))
