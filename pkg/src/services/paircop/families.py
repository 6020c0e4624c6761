"""参数化 pair-copula 族
- independence / gaussian / clayton / gumbel / frank / joe
- 旋转 0/90/180/270：c90(u,v) = c(1−u, v)，c180(u,v) = c(1−u, 1−v)，c270(u,v) = c(u, 1−v)
- 一维极大似然 (有界 Brent 搜索) 与 AIC 选择
"""
import logging
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Dict, List, Sequence, Tuple

import numpy as np
from scipy import optimize, special, stats as sps

from core.error_codes import ErrorCode
from core.exceptions import EstimationError
from models.schemas import PairConfig
from services.stats.core import std_normal_quantile

logger = logging.getLogger(__name__)

ROTATIONS = (0, 90, 180, 270)
FRANK_INDEPENDENCE_LIMIT = 1e-6
MIN_PAIR_N = 10


class FamilyTag(str, Enum):
    INDEPENDENCE = "independence"
    GAUSSIAN = "gaussian"
    CLAYTON = "clayton"
    GUMBEL = "gumbel"
    FRANK = "frank"
    JOE = "joe"


@dataclass(frozen=True)
class PairFamily:
    """族标签 + 旋转角度"""
    tag: FamilyTag
    rotation: int = 0

    def __post_init__(self):
        object.__setattr__(self, "tag", FamilyTag(self.tag))
        if self.rotation not in ROTATIONS:
            raise EstimationError(ErrorCode.INVALID_ARGUMENT, f"unsupported rotation {self.rotation}")
        if self.tag == FamilyTag.INDEPENDENCE and self.rotation != 0:
            raise EstimationError(ErrorCode.INVALID_ARGUMENT, "independence admits only rotation 0")

    @classmethod
    def parse(cls, text: str) -> "PairFamily":
        """解析 'clayton@90' 形式的候选描述"""
        name, _, rotation = text.strip().lower().partition("@")
        try:
            return cls(FamilyTag(name), int(rotation) if rotation else 0)
        except ValueError as exc:
            raise EstimationError(ErrorCode.CONFIG_ERROR, f"unknown pair family '{text}'") from exc

    def __str__(self) -> str:
        return self.tag.value if self.rotation == 0 else f"{self.tag.value}@{self.rotation}"


# --- 未旋转的族函数 (输入已截断到开区间) ---

def _log_clayton_a(u, v, theta):
    a = -theta * np.log(u)
    b = -theta * np.log(v)
    m = np.logaddexp(a, b)
    return m + np.log1p(-np.exp(-m))


def _clayton_logpdf(u, v, theta):
    return (np.log1p(theta) - (1.0 + theta) * (np.log(u) + np.log(v))
            - (1.0 / theta + 2.0) * _log_clayton_a(u, v, theta))


def _clayton_cdf(u, v, theta):
    return np.exp(-_log_clayton_a(u, v, theta) / theta)


def _clayton_h(u, v, theta):
    return np.exp(-(theta + 1.0) * np.log(v) - (1.0 / theta + 1.0) * _log_clayton_a(u, v, theta))


def _gumbel_s(u, v, theta):
    x = -np.log(u)
    y = -np.log(v)
    return x, y, np.power(np.power(x, theta) + np.power(y, theta), 1.0 / theta)


def _gumbel_logpdf(u, v, theta):
    x, y, s = _gumbel_s(u, v, theta)
    s = np.maximum(s, 1e-300)
    return (-s + np.log(s + theta - 1.0) + (1.0 - 2.0 * theta) * np.log(s)
            + (theta - 1.0) * np.log(x * y) + x + y)


def _gumbel_cdf(u, v, theta):
    return np.exp(-_gumbel_s(u, v, theta)[2])


def _gumbel_h(u, v, theta):
    _, y, s = _gumbel_s(u, v, theta)
    s = np.maximum(s, 1e-300)
    return np.exp(-s + (1.0 - theta) * np.log(s) + (theta - 1.0) * np.log(y) + y)


def _frank_d(u, v, theta):
    return np.expm1(-theta) + np.expm1(-theta * u) * np.expm1(-theta * v)


def _frank_logpdf(u, v, theta):
    if abs(theta) < FRANK_INDEPENDENCE_LIMIT:
        return np.zeros(np.broadcast(u, v).shape)
    return (np.log(theta * -np.expm1(-theta)) - theta * (u + v)
            - 2.0 * np.log(np.abs(_frank_d(u, v, theta))))


def _frank_cdf(u, v, theta):
    if abs(theta) < FRANK_INDEPENDENCE_LIMIT:
        return u * v
    return -np.log1p(np.expm1(-theta * u) * np.expm1(-theta * v) / np.expm1(-theta)) / theta


def _frank_h(u, v, theta):
    if abs(theta) < FRANK_INDEPENDENCE_LIMIT:
        return np.broadcast_to(u, np.broadcast(u, v).shape).astype(float)
    return np.expm1(-theta * u) * np.exp(-theta * v) / _frank_d(u, v, theta)


def _joe_parts(u, v, theta):
    ub = np.power(1.0 - u, theta)
    vb = np.power(1.0 - v, theta)
    return ub, vb, ub + vb - ub * vb


def _joe_logpdf(u, v, theta):
    _, _, s = _joe_parts(u, v, theta)
    return ((1.0 / theta - 2.0) * np.log(s) + (theta - 1.0) * (np.log1p(-u) + np.log1p(-v))
            + np.log(theta - 1.0 + s))


def _joe_cdf(u, v, theta):
    return 1.0 - np.power(_joe_parts(u, v, theta)[2], 1.0 / theta)


def _joe_h(u, v, theta):
    ub, _, s = _joe_parts(u, v, theta)
    return np.power(s, 1.0 / theta - 1.0) * np.power(1.0 - v, theta - 1.0) * (1.0 - ub)


def _gaussian_logpdf(u, v, rho):
    x = std_normal_quantile(u)
    y = std_normal_quantile(v)
    r2 = rho * rho
    return -0.5 * np.log1p(-r2) - (r2 * (x * x + y * y) - 2.0 * rho * x * y) / (2.0 * (1.0 - r2))


def _gaussian_cdf(u, v, rho):
    shape = np.broadcast(u, v).shape
    x, y = np.broadcast_arrays(np.atleast_1d(std_normal_quantile(u)), np.atleast_1d(std_normal_quantile(v)))
    mvn = sps.multivariate_normal(mean=[0.0, 0.0], cov=[[1.0, rho], [rho, 1.0]])
    return np.atleast_1d(mvn.cdf(np.column_stack([x.ravel(), y.ravel()]))).reshape(shape)


def _gaussian_h(u, v, rho):
    x = std_normal_quantile(u)
    y = std_normal_quantile(v)
    return special.ndtr((x - rho * y) / np.sqrt(1.0 - rho * rho))


def _independence_logpdf(u, v, theta):
    return np.zeros(np.broadcast(u, v).shape)


def _independence_cdf(u, v, theta):
    return u * v


def _independence_h(u, v, theta):
    return np.broadcast_to(u, np.broadcast(u, v).shape).astype(float)


@dataclass(frozen=True)
class _FamilyFunctions:
    logpdf: Callable
    cdf: Callable
    hfunc: Callable
    bounds: Tuple[float, float]
    n_params: int


FAMILY_FUNCTIONS: Dict[FamilyTag, _FamilyFunctions] = {
    FamilyTag.INDEPENDENCE: _FamilyFunctions(_independence_logpdf, _independence_cdf, _independence_h, (0.0, 0.0), 0),
    FamilyTag.GAUSSIAN: _FamilyFunctions(_gaussian_logpdf, _gaussian_cdf, _gaussian_h, (-0.999, 0.999), 1),
    FamilyTag.CLAYTON: _FamilyFunctions(_clayton_logpdf, _clayton_cdf, _clayton_h, (1e-4, 28.0), 1),
    FamilyTag.GUMBEL: _FamilyFunctions(_gumbel_logpdf, _gumbel_cdf, _gumbel_h, (1.0001, 17.0), 1),
    FamilyTag.FRANK: _FamilyFunctions(_frank_logpdf, _frank_cdf, _frank_h, (-35.0, 35.0), 1),
    FamilyTag.JOE: _FamilyFunctions(_joe_logpdf, _joe_cdf, _joe_h, (1.0001, 25.0), 1),
}


@dataclass(frozen=True)
class ParametricPair:
    """拟合后的参数化 pair-copula (不可变)"""
    family: PairFamily
    theta: float
    loglik: float = 0.0
    aic: float = 0.0
    n_params: int = 0
    at_bound: bool = False
    eps_u: float = 1e-10

    @classmethod
    def independence(cls) -> "ParametricPair":
        return cls(family=PairFamily(FamilyTag.INDEPENDENCE), theta=0.0)

    @classmethod
    def of(cls, text: str, theta: float, eps_u: float = 1e-10) -> "ParametricPair":
        """直接构造 (不拟合)，如 ParametricPair.of('clayton@90', 2.0)"""
        family = PairFamily.parse(text)
        return cls(family=family, theta=float(theta), n_params=FAMILY_FUNCTIONS[family.tag].n_params, eps_u=eps_u)

    def _functions(self) -> _FamilyFunctions:
        return FAMILY_FUNCTIONS[self.family.tag]

    def _clamp(self, u):
        return np.clip(np.asarray(u, dtype=float), self.eps_u, 1.0 - self.eps_u)

    def logpdf(self, u, v):
        u, v = self._clamp(u), self._clamp(v)
        rot = self.family.rotation
        if rot in (90, 180):
            u = 1.0 - u
        if rot in (180, 270):
            v = 1.0 - v
        return self._functions().logpdf(u, v, self.theta)

    def density(self, u, v):
        result = np.exp(self.logpdf(u, v))
        return result if np.ndim(result) else float(result)

    def cdf(self, u, v):
        u, v = self._clamp(u), self._clamp(v)
        base = self._functions().cdf
        rot = self.family.rotation
        if rot == 0:
            result = base(u, v, self.theta)
        elif rot == 90:
            result = v - base(1.0 - u, v, self.theta)
        elif rot == 180:
            result = u + v - 1.0 + base(1.0 - u, 1.0 - v, self.theta)
        else:
            result = u - base(u, 1.0 - v, self.theta)
        result = np.clip(result, 0.0, 1.0)
        return result if np.ndim(result) else float(result)

    def hfunc(self, u, given_v):
        """h(u|v) = ∂C(u, v)/∂v"""
        u, v = self._clamp(u), self._clamp(given_v)
        h = self._functions().hfunc
        rot = self.family.rotation
        if rot == 0:
            result = h(u, v, self.theta)
        elif rot == 90:
            result = 1.0 - h(1.0 - u, v, self.theta)
        elif rot == 180:
            result = 1.0 - h(1.0 - u, 1.0 - v, self.theta)
        else:
            result = h(u, 1.0 - v, self.theta)
        result = np.clip(result, 0.0, 1.0)
        return result if np.ndim(result) else float(result)

    def hfunc_first(self, v, given_u):
        """∂C(u, v)/∂u，即 v 在给定 u 下的条件分布 (vine 传递需要两个方向)"""
        u, v = self._clamp(given_u), self._clamp(v)
        h = self._functions().hfunc
        rot = self.family.rotation
        if rot == 0:
            result = h(v, u, self.theta)
        elif rot == 90:
            result = h(v, 1.0 - u, self.theta)
        elif rot == 180:
            result = 1.0 - h(1.0 - v, 1.0 - u, self.theta)
        else:
            result = 1.0 - h(1.0 - v, u, self.theta)
        result = np.clip(result, 0.0, 1.0)
        return result if np.ndim(result) else float(result)

    def cond_on_first(self, a, b):
        """F(b | a)，a 为第一个参数"""
        return self.hfunc_first(b, a)

    def cond_on_second(self, a, b):
        """F(a | b)，b 为第二个参数"""
        return self.hfunc(a, b)

    def describe(self) -> dict:
        return {
            "family": str(self.family),
            "theta": self.theta,
            "loglik": self.loglik,
            "aic": self.aic,
            "at_bound": self.at_bound,
        }


# --- 操作 ---

def pair_density(pair: ParametricPair, u, v):
    return pair.density(u, v)


def pair_hfunc(pair: ParametricPair, u, given_v):
    return pair.hfunc(u, given_v)


def pair_hfunc_first(pair: ParametricPair, v, given_u):
    return pair.hfunc_first(v, given_u)


def pair_cdf(pair: ParametricPair, u, v):
    return pair.cdf(u, v)


def _split_pseudo(pseudo) -> Tuple[np.ndarray, np.ndarray]:
    data = np.asarray(pseudo, dtype=float)
    if data.ndim != 2 or data.shape[1] != 2:
        raise EstimationError(ErrorCode.INVALID_ARGUMENT, "pair data must be an n×2 array")
    return data[:, 0], data[:, 1]


def fit_pair_ml(pseudo, family: PairFamily, config: PairConfig | None = None) -> ParametricPair:
    """
    单参数族的极大似然估计

    Args:
        pseudo: n×2 伪观测值
        family: 族与旋转
        config: 截断 ε_u 与搜索容差

    Raises:
        EstimationError: n < 10 (PRECONDITION)；对数似然处处非有限 (PAIR_FIT)
    """
    config = config or PairConfig()
    u, v = _split_pseudo(pseudo)
    if u.shape[0] < MIN_PAIR_N:
        raise EstimationError(ErrorCode.PRECONDITION, f"pair fit needs n >= {MIN_PAIR_N}, got {u.shape[0]}")
    functions = FAMILY_FUNCTIONS[family.tag]
    if functions.n_params == 0:
        return ParametricPair(family=family, theta=0.0, eps_u=config.eps_u)

    def loglik(theta: float) -> float:
        pair = ParametricPair(family=family, theta=theta, n_params=1, eps_u=config.eps_u)
        with np.errstate(all="ignore"):
            value = float(np.sum(pair.logpdf(u, v)))
        return value

    def objective(theta: float) -> float:
        value = loglik(theta)
        return -value if np.isfinite(value) else 1e300

    lower, upper = functions.bounds
    result = optimize.minimize_scalar(
        objective, bounds=(lower, upper), method="bounded", options={"xatol": config.ml_xtol}
    )
    theta = float(result.x)
    ll = loglik(theta)
    if not np.isfinite(ll):
        raise EstimationError(
            ErrorCode.PAIR_FIT, f"log-likelihood is not finite for family {family}", data={"family": str(family)}
        )
    guard = 1e-6 * (upper - lower)
    at_bound = theta - lower < guard or upper - theta < guard
    if at_bound:
        logger.warning(f"Pair fit for {family} stopped at the parameter guard (theta={theta:.6g})")
    return ParametricPair(
        family=family,
        theta=theta,
        loglik=ll,
        aic=-2.0 * ll + 2.0 * functions.n_params,
        n_params=functions.n_params,
        at_bound=at_bound,
        eps_u=config.eps_u,
    )


def resolve_candidates(candidates: Sequence[PairFamily | str] | None, config: PairConfig | None = None) -> List[PairFamily]:
    config = config or PairConfig()
    raw = list(candidates) if candidates else list(config.families)
    return [c if isinstance(c, PairFamily) else PairFamily.parse(c) for c in raw]


def select_pair_aic(pseudo, candidates: Sequence[PairFamily | str] | None = None,
                    config: PairConfig | None = None) -> ParametricPair:
    """
    AIC 最小的候选；AIC 相同时保留列表中靠前者

    Raises:
        EstimationError: 所有候选均拟合失败 (SELECTION)
    """
    config = config or PairConfig()
    families = resolve_candidates(candidates, config)
    best: ParametricPair | None = None
    failures: Dict[str, str] = {}
    for family in families:
        try:
            fitted = fit_pair_ml(pseudo, family, config)
        except EstimationError as exc:
            if exc.error_code == ErrorCode.PRECONDITION:
                raise
            failures[str(family)] = exc.message
            continue
        if best is None or fitted.aic < best.aic:
            best = fitted
    if best is None:
        raise EstimationError(ErrorCode.SELECTION, "every candidate family failed to fit", data=failures)
    logger.debug(f"Selected pair family {best.family} (theta={best.theta:.4g}, aic={best.aic:.3f})")
    return best
