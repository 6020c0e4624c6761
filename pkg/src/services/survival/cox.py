"""Cox 比例风险模型
- 偏似然 (Breslow 结处理) + 岭项，阻尼 Newton 迭代
- 指数基线率的极大似然估计与 Breslow 累积基线风险
"""
import logging
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Tuple

import numpy as np
from scipy import linalg

from core.error_codes import ErrorCode
from core.exceptions import EstimationError
from models.schemas import SurvivalConfig

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class CoxFit:
    """拟合结果 (不可变，可在并行任务间共享)"""
    beta: np.ndarray
    loglik: float
    gradient_norm: float
    iterations: int
    baseline_rate: float
    event_times: np.ndarray = field(repr=False)
    cumulative_hazard: np.ndarray = field(repr=False)

    def linear_predictor(self, x) -> np.ndarray:
        return np.atleast_2d(np.asarray(x, dtype=float)) @ self.beta

    def breslow_cumhaz(self, t, left: bool = False):
        """基线累积风险 H0(t)，left=True 时取左极限 H0(t−)"""
        side = "left" if left else "right"
        idx = np.searchsorted(self.event_times, t, side=side)
        padded = np.concatenate([[0.0], self.cumulative_hazard])
        return padded[idx]


def _tie_first_index(sorted_y: np.ndarray) -> np.ndarray:
    return np.searchsorted(sorted_y, sorted_y, side="left")


def _partial_likelihood(
    beta: np.ndarray, y: np.ndarray, event: np.ndarray, x: np.ndarray, ridge: float, first: np.ndarray,
    only_f: bool = False,
):
    """
    负偏对数似然及其梯度与 Hessian (按 y 升序排列的数据)
    风险集 R(t_i) = {j : y_j ≥ t_i}，Breslow 结处理
    """
    eta = x @ beta
    shift = eta.max()
    w = np.exp(eta - shift)
    s0 = np.cumsum(w[::-1])[::-1][first]
    ev = event.astype(bool)
    loglik = np.sum(eta[ev] - shift - np.log(s0[ev])) - 0.5 * ridge * float(beta @ beta)
    if only_f:
        return -loglik
    wx = w[:, None] * x
    s1 = np.cumsum(wx[::-1], axis=0)[::-1][first]
    xbar = s1[ev] / s0[ev][:, None]
    grad = np.sum(x[ev] - xbar, axis=0) - ridge * beta
    wxx = w[:, None, None] * x[:, :, None] * x[:, None, :]
    s2 = np.cumsum(wxx[::-1], axis=0)[::-1][first]
    info = np.sum(s2[ev] / s0[ev][:, None, None] - xbar[:, :, None] * xbar[:, None, :], axis=0)
    info = info + ridge * np.eye(beta.shape[0])
    return -loglik, -grad, info


def backtracking_line_search(
    fx: Callable[[np.ndarray], float], x: np.ndarray, d: np.ndarray, f0: float,
    alpha: float = 0.5, t_threshold: float = 1e-10,
) -> Optional[float]:
    """回溯步长：返回首个不增加目标值的步长，失败返回 None"""
    t = 1.0
    while t > t_threshold:
        f1 = fx(x + d * t)
        if np.isfinite(f1) and f1 <= f0:
            return t
        t *= alpha
    return None


def fit_cox(y, event, x, config: SurvivalConfig | None = None) -> CoxFit:
    """
    最大化 Cox 偏似然

    Args:
        y: 观测时间
        event: 事件指示 (对删失模型传入 1 − Δ)
        x: n×d 协变量
        config: 岭项、容差与最大迭代数

    Returns:
        CoxFit: β̂、指数基线率 r̂ = Σe / Σ y·exp(β̂ᵀx)、Breslow 累积基线风险

    Raises:
        EstimationError: 无事件 (CANNOT_FIT)，迭代不收敛 (CONVERGENCE)，
            Hessian 分解失败 (DECOMPOSITION)
    """
    config = config or SurvivalConfig()
    y = np.asarray(y, dtype=float)
    event = np.asarray(event).astype(bool)
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x.reshape(-1, 1)
    if not event.any():
        raise EstimationError(ErrorCode.CANNOT_FIT, "Cox model needs at least one event")

    order = np.argsort(y, kind="stable")
    ys, es, xs = y[order], event[order], x[order]
    first = _tie_first_index(ys)

    def fgh(beta: np.ndarray, only_f: bool = False):
        return _partial_likelihood(beta, ys, es, xs, config.cox_ridge, first, only_f=only_f)

    beta = np.zeros(x.shape[1])
    trace: List[Tuple[int, float]] = []
    stalled = False
    iteration = 0
    f, g, h = fgh(beta)
    grad_norm = float(np.linalg.norm(g))
    while grad_norm >= config.cox_tol and iteration < config.cox_max_iter:
        iteration += 1
        try:
            d = linalg.solve(h, -g, assume_a="pos")
        except (linalg.LinAlgError, ValueError) as exc:
            raise EstimationError(
                ErrorCode.DECOMPOSITION, f"Cox Hessian is singular: {exc}", data={"beta": beta.tolist()}
            ) from exc
        t = backtracking_line_search(lambda b: fgh(b, only_f=True), beta, d, f)
        if t is None:
            stalled = True
            break
        beta = beta + d * t
        f, g, h = fgh(beta)
        grad_norm = float(np.linalg.norm(g))
        trace.append((iteration, grad_norm))

    if grad_norm >= config.cox_tol:
        # 数值精度导致的停滞：梯度已足够小时接受
        if not (stalled and grad_norm < np.sqrt(config.cox_tol)):
            raise EstimationError(
                ErrorCode.CONVERGENCE,
                f"Cox Newton iterations did not converge (|g|={grad_norm:.3e} after {iteration} iterations)",
                data={"beta": beta.tolist(), "trace": trace},
            )
        logger.debug(f"Cox line search stalled at |g|={grad_norm:.3e}, accepting iterate")

    risk = np.exp(x @ beta)
    baseline_rate = float(event.sum() / np.sum(y * risk))

    # Breslow 基线累积风险
    event_times, counts = np.unique(ys[es], return_counts=True)
    risk_sorted = np.exp(xs @ beta)
    tail = np.cumsum(risk_sorted[::-1])[::-1]
    at_risk = tail[np.searchsorted(ys, event_times, side="left")]
    cumhaz = np.cumsum(counts / at_risk)

    logger.debug(f"Cox fit: beta={np.round(beta, 4).tolist()}, |g|={grad_norm:.2e}, iterations={iteration}")
    return CoxFit(
        beta=beta,
        loglik=float(-f),
        gradient_norm=grad_norm,
        iterations=iteration,
        baseline_rate=baseline_rate,
        event_times=event_times,
        cumulative_hazard=cumhaz,
    )
