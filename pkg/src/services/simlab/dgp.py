"""数据生成过程 (DGP)
- A / B：(T, X) 服从 Gaussian copula，边缘均匀，C ~ U[0, M]
- C / D / M2：5 维 Gaussian copula 协变量 + 指数基线 Cox 模型
- DETTE：T = (X − 0.5)² + 0.025ε，单协变量，无删失
潜在 T 只保存在 SimulatedData 中，估计器只接收 ObservedSample
"""
import logging
from dataclasses import dataclass
from typing import Dict, Tuple

import numpy as np

from core.error_codes import ErrorCode
from core.exceptions import EstimationError
from models.schemas import DgpSpec, DgpTag
from services.stats.core import std_normal_cdf, std_normal_quantile
from services.survival.sample import ObservedSample

logger = logging.getLogger(__name__)

# (T, X1, X2)
DGP_A_CORR = np.array([
    [1.0, 0.3, 0.9],
    [0.3, 1.0, 0.5],
    [0.9, 0.5, 1.0],
])
# (T, X1, X2, X3)
DGP_B_CORR = np.array([
    [1.0, 0.3, 0.9, 0.7],
    [0.3, 1.0, 0.5, 0.25],
    [0.9, 0.5, 1.0, 0.5],
    [0.7, 0.25, 0.5, 1.0],
])
# (X1, ..., X5)，上三角按 ρ12, ρ13, ..., ρ45 排列
COX_COVARIATE_CORR = np.array([
    [1.0, 0.3, 0.4, 0.5, 0.6],
    [0.3, 1.0, 0.7, 0.3, 0.4],
    [0.4, 0.7, 1.0, 0.5, 0.6],
    [0.5, 0.3, 0.5, 1.0, 0.7],
    [0.6, 0.4, 0.6, 0.7, 1.0],
])
COX_BETA = np.array([1.0, -0.75, 0.5, 0.25, -0.6])

UNIFORM_CENSORING_BOUND: Dict[float, float] = {0.3: 5.0 / 3.0, 0.5: 1.0}
DGP_C_RATE: Dict[float, float] = {0.3: 0.464, 0.5: 1.083}
DGP_D_FACTOR: Dict[float, float] = {0.3: 3.0 / 7.0, 0.5: 1.0}
MODEL2_RATE: Dict[float, float] = {0.3: 0.208, 0.5: 0.486}

DETTE_SIGMA = 0.025
DETTE_N = 500
DETTE_TAU = 0.5

COVARIATE_DIM: Dict[DgpTag, int] = {
    DgpTag.A: 2, DgpTag.B: 3, DgpTag.C: 5, DgpTag.D: 5, DgpTag.M2: 5, DgpTag.DETTE: 1,
}


@dataclass(frozen=True)
class SimulatedData:
    """一次模拟的结果；latent_t 仅用于诊断"""
    spec: DgpSpec
    sample: ObservedSample
    latent_t: np.ndarray


def sample_gaussian_copula(corr, n: int, rng: np.random.Generator) -> np.ndarray:
    """
    Gaussian copula 抽样：Z ~ N(0, corr) 经 Cholesky 生成，逐列 Φ 变换

    Raises:
        EstimationError: 非对称、非单位对角或非正定 (DECOMPOSITION)
    """
    corr = np.asarray(corr, dtype=float)
    k = corr.shape[0]
    if corr.shape != (k, k) or not np.allclose(corr, corr.T) or not np.allclose(np.diag(corr), 1.0):
        raise EstimationError(ErrorCode.DECOMPOSITION, "correlation matrix must be symmetric with unit diagonal")
    try:
        chol = np.linalg.cholesky(corr)
    except np.linalg.LinAlgError as exc:
        raise EstimationError(ErrorCode.DECOMPOSITION, "correlation matrix is not positive definite",
                              data={"eigenvalues": np.linalg.eigvalsh(corr).tolist()}) from exc
    z = rng.standard_normal((n, k)) @ chol.T
    return std_normal_cdf(z)


def _conditional_law(corr: np.ndarray) -> Tuple[np.ndarray, float]:
    """probit 尺度上 T | X 的回归系数 b = Σ_XX⁻¹ σ_TX 与残差标准差"""
    sigma = corr[1:, 0]
    b = np.linalg.solve(corr[1:, 1:], sigma)
    return b, float(np.sqrt(1.0 - sigma @ b))


def _gaussian_design(tag: DgpTag) -> np.ndarray:
    return DGP_A_CORR if tag == DgpTag.A else DGP_B_CORR


def cox_linear_predictor(tag: DgpTag, x) -> np.ndarray:
    """βᵀx，Model 2 的第二个协变量取指数"""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if tag == DgpTag.M2:
        x = x.copy()
        x[:, 1] = np.exp(x[:, 1])
    return x @ COX_BETA


def sample_covariates(spec: DgpSpec, n: int, rng: np.random.Generator) -> np.ndarray:
    """从协变量分布抽取 n 个点 (估计器所见的尺度)"""
    if spec.tag in (DgpTag.A, DgpTag.B):
        return sample_gaussian_copula(_gaussian_design(spec.tag), n, rng)[:, 1:]
    if spec.tag == DgpTag.DETTE:
        return rng.uniform(0.0, 1.0, size=(n, 1))
    return sample_gaussian_copula(COX_COVARIATE_CORR, n, rng)


def _censoring_times(spec: DgpSpec, eta: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    n = eta.shape[0]
    level = spec.censoring_level
    if level == 0.0:
        return np.full(n, np.inf)
    if spec.tag in (DgpTag.A, DgpTag.B):
        return rng.uniform(0.0, UNIFORM_CENSORING_BOUND[level], size=n)
    if spec.tag == DgpTag.C:
        return rng.exponential(1.0 / DGP_C_RATE[level], size=n)
    if spec.tag == DgpTag.D:
        return rng.exponential(1.0 / (DGP_D_FACTOR[level] * np.exp(eta)))
    return rng.exponential(1.0 / MODEL2_RATE[level], size=n)


def gen_dgp(spec: DgpSpec, rng: np.random.Generator) -> SimulatedData:
    """生成 (Y, Δ, X)，Y = min(T, C)，Δ = 1(T ≤ C)"""
    n = spec.n
    eta = np.zeros(n)
    if spec.tag in (DgpTag.A, DgpTag.B):
        u = sample_gaussian_copula(_gaussian_design(spec.tag), n, rng)
        t, x = u[:, 0], u[:, 1:]
    elif spec.tag == DgpTag.DETTE:
        x = rng.uniform(0.0, 1.0, size=(n, 1))
        t = (x[:, 0] - 0.5) ** 2 + DETTE_SIGMA * rng.standard_normal(n)
    else:
        x = sample_gaussian_copula(COX_COVARIATE_CORR, n, rng)
        eta = cox_linear_predictor(spec.tag, x)
        t = rng.standard_exponential(n) / np.exp(eta)
    c = _censoring_times(spec, eta, rng)
    y = np.minimum(t, c)
    delta = t <= c
    logger.debug(f"DGP {spec.tag.value}: n={n}, censored={n - int(delta.sum())}")
    sample = ObservedSample(y=y, delta=delta, x=x.reshape(n, COVARIATE_DIM[spec.tag]))
    return SimulatedData(spec=spec, sample=sample, latent_t=t)


def _check_point(spec: DgpSpec, x) -> np.ndarray:
    x = np.asarray(x, dtype=float).ravel()
    dim = COVARIATE_DIM[spec.tag]
    if x.shape[0] != dim:
        raise EstimationError(ErrorCode.INVALID_ARGUMENT, f"DGP {spec.tag.value} has {dim} covariates, got {x.shape[0]}")
    return x


def true_quantile(spec: DgpSpec, x, tau: float) -> float:
    """
    条件 τ 分位数的闭式值
    - A / B：Φ(bᵀΦ⁻¹(x) + sd·Φ⁻¹(τ))
    - C / D / M2：−log(1−τ)·exp(−βᵀx)
    - DETTE：(x − 0.5)² + σΦ⁻¹(τ)

    Raises:
        EstimationError: 维数不符 (INVALID_ARGUMENT)，x 超出 (0,1) (DOMAIN_ERROR)
    """
    x = _check_point(spec, x)
    if spec.tag in (DgpTag.A, DgpTag.B):
        b, sd = _conditional_law(_gaussian_design(spec.tag))
        z = std_normal_quantile(x)
        return float(std_normal_cdf(b @ z + sd * std_normal_quantile(tau)))
    if spec.tag == DgpTag.DETTE:
        return float((x[0] - 0.5) ** 2 + DETTE_SIGMA * std_normal_quantile(tau))
    if not 0.0 < tau < 1.0:
        raise EstimationError(ErrorCode.DOMAIN_ERROR, f"tau={tau} outside (0, 1)")
    return float(-np.log1p(-tau) * np.exp(-cox_linear_predictor(spec.tag, x)[0]))


def conditional_quantile_oracle(spec: DgpSpec, x, tau: float, rng: np.random.Generator,
                                draws: int = 1_000_000) -> float:
    """固定 x 模拟 T 的条件分布，取经验 τ 分位数"""
    x = _check_point(spec, x)
    if spec.tag in (DgpTag.A, DgpTag.B):
        corr = _gaussian_design(spec.tag)
        z_x = std_normal_quantile(x)
        # 条件正态：均值 Σ_TX Σ_XX⁻¹ z_x，方差 1 − Σ_TX Σ_XX⁻¹ Σ_XT
        mean = corr[0, 1:] @ np.linalg.solve(corr[1:, 1:], z_x)
        var = corr[0, 0] - corr[0, 1:] @ np.linalg.solve(corr[1:, 1:], corr[1:, 0])
        t = std_normal_cdf(mean + np.sqrt(var) * rng.standard_normal(draws))
    elif spec.tag == DgpTag.DETTE:
        t = (x[0] - 0.5) ** 2 + DETTE_SIGMA * rng.standard_normal(draws)
    else:
        t = rng.standard_exponential(draws) / np.exp(cox_linear_predictor(spec.tag, x)[0])
    return float(np.quantile(t, tau))


def _censoring_probabilities(spec: DgpSpec, points: np.ndarray) -> np.ndarray:
    level = spec.censoring_level
    n = points.shape[0]
    if level == 0.0:
        return np.zeros(n)
    if spec.tag in (DgpTag.A, DgpTag.B):
        # T ∈ (0,1) ⊂ [0, M]，P(C < T | x) = E[T | x] / M
        b, sd = _conditional_law(_gaussian_design(spec.tag))
        mean_t = std_normal_cdf(std_normal_quantile(points) @ b / np.sqrt(1.0 + sd ** 2))
        return mean_t / UNIFORM_CENSORING_BOUND[level]
    if spec.tag == DgpTag.D:
        factor = DGP_D_FACTOR[level]
        return np.full(n, factor / (factor + 1.0))
    rate = DGP_C_RATE[level] if spec.tag == DgpTag.C else MODEL2_RATE[level]
    return rate / (rate + np.exp(cox_linear_predictor(spec.tag, points)))


def censoring_probability(spec: DgpSpec, x) -> float:
    """精确的条件删失概率 P(C < T | X = x)"""
    x = _check_point(spec, x)
    return float(_censoring_probabilities(spec, x[None, :])[0])


def expected_censoring_fraction(spec: DgpSpec, rng: np.random.Generator, draws: int = 100_000) -> float:
    """协变量分布下的平均删失概率 E[P(C < T | X)]"""
    points = sample_covariates(spec, draws, rng)
    if spec.tag in (DgpTag.A, DgpTag.B):
        points = np.clip(points, 1e-12, 1.0 - 1e-12)
    return float(np.mean(_censoring_probabilities(spec, points)))
