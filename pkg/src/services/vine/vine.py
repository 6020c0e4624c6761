"""(d+1) 维 copula 组装
- SP：d 个非参数兴趣对 c(U0, Uj) + 条件伪观测上的参数化噪声 vine
- NP：结构相同，所有边均为非参数网格
- P：(U0, U1..Ud) 上数据驱动的全参数 R-vine
"""
import logging
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from core.error_codes import ErrorCode
from core.exceptions import EstimationError
from models.schemas import CopulaMode, VineConfig
from services.paircop.families import ParametricPair, fit_pair_ml, select_pair_aic
from services.paircop.grid import DensityGrid, fit_grid_at_bandwidth
from services.paircop.probit import fit_probit_ll
from services.vine.rvine import PairFitter, PairModel, RVine, clamp_unit, fit_rvine, validate_structure

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class VineSelection:
    """可复用的选择结果：兴趣对 (带宽或族)、噪声/联合 vine 的结构与每条边的选择"""
    interest: Tuple[PairModel, ...]
    noisy: Optional[RVine]
    joint: Optional[RVine]


@dataclass(frozen=True)
class VineCopulaModel:
    mode: CopulaMode
    d: int
    interest_pairs: Tuple[PairModel, ...] = ()
    noisy: Optional[RVine] = None
    joint: Optional[RVine] = None

    def selection(self) -> VineSelection:
        return VineSelection(interest=self.interest_pairs, noisy=self.noisy, joint=self.joint)

    def conditional_pseudo(self, u0, u) -> np.ndarray:
        """V_j = F(u_j | u0)，逐列"""
        u = np.atleast_2d(u)
        cols = [
            clamp_unit(np.asarray(pair.cond_on_first(u0, u[:, j]), dtype=float))
            for j, pair in enumerate(self.interest_pairs)
        ]
        return np.column_stack(cols)

    def log_density(self, u0, u) -> np.ndarray:
        u0 = clamp_unit(np.atleast_1d(np.asarray(u0, dtype=float)))
        u = clamp_unit(np.atleast_2d(np.asarray(u, dtype=float)))
        if u.shape[1] != self.d:
            raise EstimationError(ErrorCode.INVALID_ARGUMENT, f"expected {self.d} covariates, got {u.shape[1]}")
        u0, _ = np.broadcast_arrays(u0, u[:, 0])
        u = np.broadcast_to(u, (u0.shape[0], self.d))
        if self.mode == CopulaMode.P:
            return self.joint.log_density(np.column_stack([u0, u]))
        logdens = np.zeros(u0.shape[0])
        with np.errstate(divide="ignore"):
            for j, pair in enumerate(self.interest_pairs):
                logdens = logdens + np.log(np.asarray(pair.density(u0, u[:, j]), dtype=float))
        if self.noisy is not None:
            logdens = logdens + self.noisy.log_density(self.conditional_pseudo(u0, u))
        return logdens

    def density(self, u0, u) -> np.ndarray:
        return np.exp(self.log_density(u0, u))


# --- 边拟合器 ---

def _parametric_fitter(config: VineConfig) -> PairFitter:
    def fit(data: np.ndarray, template: Optional[PairModel]) -> PairModel:
        if isinstance(template, ParametricPair):
            return fit_pair_ml(data, template.family, config.pair)
        return select_pair_aic(data, config.pair.families, config.pair)
    return fit


def _grid_fitter(config: VineConfig) -> PairFitter:
    def fit(data: np.ndarray, template: Optional[PairModel]) -> PairModel:
        if isinstance(template, DensityGrid):
            return fit_grid_at_bandwidth(data, template.bandwidth, config.smoother)
        return fit_probit_ll(data, config.smoother)
    return fit


# --- 操作 ---

def conditional_pseudo(pseudo_u0, pseudo_xj, interest_pair: PairModel) -> np.ndarray:
    """F̂_{j|Y}(U_j | U_0)，截断到 [ε, 1−ε]"""
    return clamp_unit(np.asarray(interest_pair.cond_on_first(pseudo_u0, pseudo_xj), dtype=float))


def fit_vine(pseudo_u0, pseudo_x, mode: CopulaMode, config: VineConfig | None = None,
             selection: VineSelection | None = None) -> VineCopulaModel:
    """
    拟合 vine copula

    Args:
        pseudo_u0: 响应的伪观测 (长度 n)
        pseudo_x: n×d 协变量伪观测
        mode: SP / P / NP
        config: pair 与平滑器配置
        selection: 复用的带宽/结构/族 (留一交叉验证)

    Raises:
        EstimationError: n 不足 (PRECONDITION)，边拟合失败 (附带边标识)
    """
    config = config or VineConfig()
    u0 = clamp_unit(np.asarray(pseudo_u0, dtype=float).ravel())
    x = np.asarray(pseudo_x, dtype=float)
    if x.ndim == 1:
        x = x.reshape(-1, 1)
    x = clamp_unit(x)
    n, d = x.shape
    if n != u0.shape[0]:
        raise EstimationError(ErrorCode.INVALID_ARGUMENT, "pseudo_u0 and pseudo_x lengths differ")
    if n < config.min_n:
        raise EstimationError(ErrorCode.PRECONDITION, f"vine fit needs n >= {config.min_n}, got {n}")

    if mode == CopulaMode.P:
        joint = fit_rvine(np.column_stack([u0, x]), _parametric_fitter(config),
                          template=selection.joint if selection else None)
        return VineCopulaModel(mode=mode, d=d, joint=joint)

    grid_fit = _grid_fitter(config)
    interest = []
    for j in range(d):
        template = selection.interest[j] if selection else None
        try:
            interest.append(grid_fit(np.column_stack([u0, x[:, j]]), template))
        except EstimationError as exc:
            raise exc.annotate(edge=f"interest Y,X{j + 1}") from exc
    interest = tuple(interest)

    noisy = None
    if d > 1:
        v = np.column_stack([conditional_pseudo(u0, x[:, j], interest[j]) for j in range(d)])
        noisy_fitter = _parametric_fitter(config) if mode == CopulaMode.SP else grid_fit
        noisy = fit_rvine(v, noisy_fitter, template=selection.noisy if selection else None)
    model = VineCopulaModel(mode=mode, d=d, interest_pairs=interest, noisy=noisy)
    logger.debug(f"Fitted {mode.value} vine: d={d}, n={n}")
    return model


def eval_copula_density(model: VineCopulaModel, u0, u):
    result = model.density(u0, u)
    return float(result[0]) if np.ndim(u0) == 0 and np.ndim(u) <= 1 else result


def describe_vine(model: VineCopulaModel) -> dict:
    """可序列化的结构描述"""
    return {
        "mode": model.mode.value,
        "d": model.d,
        "interest_pairs": [pair.describe() for pair in model.interest_pairs],
        "noisy": model.noisy.describe() if model.noisy else None,
        "joint": model.joint.describe() if model.joint else None,
        "valid": not any(validate_structure(v) for v in (model.noisy, model.joint) if v is not None),
    }
