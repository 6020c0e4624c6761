"""最近邻带宽选择
- h(α) = probit 数据两两距离的 α 分位数 × n^(−1/6)
- 按固定种子的 K 折交叉验证对数似然选择 α
"""
import logging
from typing import List, Sequence

import numpy as np
from scipy.spatial.distance import pdist

from core.error_codes import ErrorCode
from core.exceptions import EstimationError
from models.schemas import SmootherConfig
from services.paircop.grid import fit_grid_at_bandwidth
from services.stats.core import std_normal_quantile

logger = logging.getLogger(__name__)

MAX_DISTANCE_ROWS = 2000


def nn_bandwidth(pseudo, fraction: float, config: SmootherConfig) -> float:
    """单个最近邻比例对应的带宽"""
    data = np.asarray(pseudo, dtype=float)
    n = data.shape[0]
    z = std_normal_quantile(np.clip(data, config.eps_u, 1.0 - config.eps_u))
    if n > MAX_DISTANCE_ROWS:
        rows = np.random.default_rng(config.fold_seed).choice(n, MAX_DISTANCE_ROWS, replace=False)
        z = z[np.sort(rows)]
    distances = pdist(z)
    return float(np.quantile(distances, fraction) * n ** (-1.0 / 6.0))


def _fold_labels(n: int, folds: int, seed: int) -> np.ndarray:
    order = np.random.default_rng(seed).permutation(n)
    labels = np.empty(n, dtype=int)
    labels[order] = np.arange(n) % folds
    return labels


def cv_loglik(pseudo, bandwidth: float, config: SmootherConfig) -> float:
    """K 折交叉验证对数似然 (粗网格)"""
    data = np.asarray(pseudo, dtype=float)
    labels = _fold_labels(data.shape[0], config.cv_folds, config.fold_seed)
    total = 0.0
    for fold in range(config.cv_folds):
        held = labels == fold
        grid = fit_grid_at_bandwidth(data[~held], bandwidth, config, grid_size=config.cv_grid_size)
        dens = grid.density(data[held, 0], data[held, 1])
        total += float(np.sum(np.log(np.maximum(dens, 1e-300))))
    return total


def select_bandwidth(pseudo, fractions: Sequence[float] | None = None,
                     config: SmootherConfig | None = None) -> float:
    """
    在候选最近邻比例中选择交叉验证对数似然最大者

    Raises:
        EstimationError: 候选为空或越界 (INVALID_ARGUMENT)，样本不足 (PRECONDITION)
    """
    config = config or SmootherConfig()
    fractions: List[float] = list(config.nn_fractions if fractions is None else fractions)
    if not fractions:
        raise EstimationError(ErrorCode.INVALID_ARGUMENT, "bandwidth selection needs at least one fraction")
    if any(not 0.0 < f <= 1.0 for f in fractions):
        raise EstimationError(ErrorCode.INVALID_ARGUMENT, f"fractions must lie in (0, 1]: {fractions}")
    data = np.asarray(pseudo, dtype=float)
    if data.shape[0] < config.min_n:
        raise EstimationError(ErrorCode.PRECONDITION, f"bandwidth selection needs n >= {config.min_n}")

    candidates = [nn_bandwidth(data, f, config) for f in fractions]
    if len(candidates) == 1:
        return candidates[0]
    scores = [cv_loglik(data, h, config) for h in candidates]
    best = int(np.argmax(scores))
    logger.debug(
        f"Bandwidth selection: fractions={fractions}, scores={np.round(scores, 2).tolist()}, "
        f"chosen alpha={fractions[best]} (h={candidates[best]:.4f})"
    )
    return candidates[best]
