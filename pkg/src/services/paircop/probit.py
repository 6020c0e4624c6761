"""probit 变换 copula 密度估计入口
- fit_probit_ll：带宽选择 + 局部似然网格
- 未变换的朴素核估计 (比较基线)
"""
import logging
from dataclasses import dataclass

import numpy as np
from scipy import stats

from core.error_codes import ErrorCode
from core.exceptions import EstimationError
from models.schemas import SmootherConfig
from services.paircop.bandwidth import select_bandwidth
from services.paircop.grid import DensityGrid, fit_grid_at_bandwidth

logger = logging.getLogger(__name__)


def fit_probit_ll(pseudo, config: SmootherConfig | None = None) -> DensityGrid:
    """
    probit 变换局部似然 copula 密度估计

    Args:
        pseudo: n×2 伪观测值
        config: 固定带宽时跳过选择

    Raises:
        EstimationError: n < config.min_n (PRECONDITION)
    """
    config = config or SmootherConfig()
    data = np.asarray(pseudo, dtype=float)
    if data.ndim != 2 or data.shape[1] != 2:
        raise EstimationError(ErrorCode.INVALID_ARGUMENT, "pair data must be an n×2 array")
    if data.shape[0] < config.min_n:
        raise EstimationError(
            ErrorCode.PRECONDITION, f"probit local-likelihood fit needs n >= {config.min_n}, got {data.shape[0]}"
        )
    bandwidth = config.bandwidth or select_bandwidth(data, config.nn_fractions, config)
    grid = fit_grid_at_bandwidth(data, bandwidth, config)
    logger.debug(f"Fitted probit grid: n={data.shape[0]}, h={bandwidth:.4f}, fallback={grid.fallback_nodes}")
    return grid


@dataclass(frozen=True)
class NaiveKernelCopula:
    """直接在 [0,1]² 上的高斯核密度 (无边界修正)"""
    kde: stats.gaussian_kde

    def density(self, u, v):
        u, v = np.broadcast_arrays(np.asarray(u, dtype=float), np.asarray(v, dtype=float))
        values = self.kde(np.vstack([u.ravel(), v.ravel()])).reshape(u.shape)
        return values if np.ndim(values) else float(values)


def naive_kernel_copula_density(pseudo, bandwidth=None) -> NaiveKernelCopula:
    data = np.asarray(pseudo, dtype=float)
    return NaiveKernelCopula(kde=stats.gaussian_kde(data.T, bw_method=bandwidth))
