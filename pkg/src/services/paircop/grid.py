"""probit 空间密度网格
- 局部二次对数密度的局部似然拟合 (所有网格节点批量 Newton)
- 反变换得到 copula 密度：c(u, v) = f̂(Φ⁻¹u, Φ⁻¹v) / (φ(Φ⁻¹u) φ(Φ⁻¹v)) × 归一化常数
- 网格 h-函数 (行归一化的梯形积分)
- 文本格式的保存与加载
"""
import logging
from dataclasses import dataclass, field
from functools import cached_property
from typing import Tuple

import numpy as np
from scipy import integrate, interpolate

from core.error_codes import ErrorCode
from core.exceptions import EstimationError
from models.schemas import SmootherConfig
from services.stats.core import std_normal_pdf, std_normal_quantile

logger = logging.getLogger(__name__)

QUADRATURE_POINTS = 401
_MIN_KERNEL_MASS = 1e-12
_CHUNK_BUDGET = 2_000_000


@dataclass(frozen=True)
class DensityGrid:
    """
    probit 空间 m×m 网格上的密度值
    values[i, j] 对应 (z_i, z_j)，第一轴为 copula 的第一个参数
    """
    m: int
    z_max: float
    values: np.ndarray = field(repr=False)
    bandwidth: float
    normalization: float = 1.0
    fallback_nodes: int = 0
    eps_u: float = 1e-10

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.shape != (self.m, self.m):
            raise EstimationError(ErrorCode.INVALID_ARGUMENT, f"grid values must be {self.m}x{self.m}")
        if not np.all(np.isfinite(values)) or np.any(values < 0):
            raise EstimationError(ErrorCode.INVALID_ARGUMENT, "grid values must be finite and nonnegative")
        object.__setattr__(self, "values", values)

    @property
    def z_nodes(self) -> np.ndarray:
        return np.linspace(-self.z_max, self.z_max, self.m)

    @cached_property
    def _interpolator(self) -> interpolate.RegularGridInterpolator:
        return interpolate.RegularGridInterpolator(
            (self.z_nodes, self.z_nodes), self.values, method="linear", bounds_error=False, fill_value=None
        )

    def _probit(self, u) -> np.ndarray:
        z = std_normal_quantile(np.clip(np.asarray(u, dtype=float), self.eps_u, 1.0 - self.eps_u))
        return np.clip(z, -self.z_max, self.z_max)

    def raw_density(self, u, v) -> np.ndarray:
        """未归一化的反变换密度；网格范围外取边缘值"""
        u, v = np.broadcast_arrays(np.asarray(u, dtype=float), np.asarray(v, dtype=float))
        shape = u.shape
        z1 = np.atleast_1d(self._probit(u.ravel()))
        z2 = np.atleast_1d(self._probit(v.ravel()))
        f = np.maximum(self._interpolator(np.column_stack([z1, z2])), 0.0)
        return (f / (std_normal_pdf(z1) * std_normal_pdf(z2))).reshape(shape)

    def density(self, u, v):
        result = self.normalization * self.raw_density(u, v)
        return result if np.ndim(result) else float(result)

    def hfunc(self, upper, given, axis: int = 0):
        """
        条件分布函数
        axis=0: ∫_0^upper c(given, s) ds / ∫_0^1 c(given, s) ds
        axis=1: ∫_0^upper c(s, given) ds / ∫_0^1 c(s, given) ds
        """
        upper, given = np.broadcast_arrays(np.asarray(upper, dtype=float), np.asarray(given, dtype=float))
        shape = upper.shape
        upper = upper.ravel()
        given = given.ravel()
        s = np.linspace(0.0, 1.0, QUADRATURE_POINTS)
        if axis == 0:
            dens = self.raw_density(given[:, None], s[None, :])
        else:
            dens = self.raw_density(s[None, :], given[:, None])
        cum = integrate.cumulative_trapezoid(dens, s, axis=1, initial=0.0)
        total = cum[:, -1:]
        empty = total[:, 0] <= 0.0
        cdf = np.where(empty[:, None], s[None, :], cum / np.where(total > 0.0, total, 1.0))
        pos = np.clip(upper, 0.0, 1.0) * (QUADRATURE_POINTS - 1)
        i0 = np.minimum(np.floor(pos).astype(int), QUADRATURE_POINTS - 2)
        frac = pos - i0
        rows = np.arange(upper.shape[0])
        result = cdf[rows, i0] * (1.0 - frac) + cdf[rows, i0 + 1] * frac
        result = np.clip(result, 0.0, 1.0).reshape(shape)
        return result if np.ndim(result) else float(result)

    def cond_on_first(self, a, b):
        return self.hfunc(b, a, axis=0)

    def cond_on_second(self, a, b):
        return self.hfunc(a, b, axis=1)

    def describe(self) -> dict:
        return {
            "kind": "probit-local-likelihood",
            "m": self.m,
            "z_max": self.z_max,
            "bandwidth": self.bandwidth,
            "normalization": self.normalization,
            "fallback_nodes": self.fallback_nodes,
        }


def grid_mass(grid: DensityGrid) -> float:
    """401×401 梯形求积下未归一化密度的总质量"""
    u = np.linspace(0.0, 1.0, QUADRATURE_POINTS)
    dens = grid.raw_density(u[:, None], u[None, :])
    return float(integrate.trapezoid(integrate.trapezoid(dens, u, axis=1), u))


def grid_copula_density(grid: DensityGrid, u, v):
    return grid.density(u, v)


def grid_hfunc(grid: DensityGrid, upper, given_u0):
    """F(upper | u0)：对第二个参数积分"""
    return grid.hfunc(upper, given_u0, axis=0)


def grid_hfunc_second(grid: DensityGrid, upper, given_v):
    """F(upper | v)：对第一个参数积分"""
    return grid.hfunc(upper, given_v, axis=1)


# --- 局部似然 ---

def _quadratic_basis(s1: np.ndarray, s2: np.ndarray) -> np.ndarray:
    return np.stack([np.ones_like(s1), s1, s2, 0.5 * s1 * s1, s1 * s2, 0.5 * s2 * s2], axis=-1)


def _kernel_moments(z_data: np.ndarray, centers: np.ndarray, bandwidth: float) -> np.ndarray:
    """D(z) = (1/n) Σ K_h(T_i − z) b(T_i − z)，按节点分块"""
    n = z_data.shape[0]
    chunk = max(1, _CHUNK_BUDGET // (6 * n))
    moments = np.empty((centers.shape[0], 6))
    for start in range(0, centers.shape[0], chunk):
        c = centers[start:start + chunk]
        d1 = z_data[None, :, 0] - c[:, None, 0]
        d2 = z_data[None, :, 1] - c[:, None, 1]
        kernel = std_normal_pdf(d1 / bandwidth) * std_normal_pdf(d2 / bandwidth) / bandwidth ** 2
        moments[start:start + chunk] = np.einsum("cn,cnk->ck", kernel, _quadratic_basis(d1, d2)) / n
    return moments


def _quadrature(bandwidth: float, nodes: int) -> Tuple[np.ndarray, np.ndarray]:
    """∫ K_h(s) g(s) ds ≈ Σ_q W_q g(s_q)，Gauss-Hermite 张量积"""
    x, w = np.polynomial.hermite.hermgauss(nodes)
    x1, x2 = np.meshgrid(x, x, indexing="ij")
    w12 = np.outer(w, w).ravel() / np.pi
    scale = bandwidth * np.sqrt(2.0)
    basis = _quadratic_basis(scale * x1.ravel(), scale * x2.ravel())
    return basis, w12


def _local_newton(moments: np.ndarray, basis: np.ndarray, weights: np.ndarray,
                  active: np.ndarray, max_iter: int, tol: float) -> Tuple[np.ndarray, np.ndarray]:
    """
    对每个节点最大化 L(a) = a·D − ∫ K exp(a·b)
    L 为凹函数；带回溯的批量 Newton，返回系数与收敛标记
    """
    coef = np.zeros_like(moments)
    coef[:, 0] = np.log(np.maximum(moments[:, 0], _MIN_KERNEL_MASS))
    outer = (basis[:, :, None] * basis[:, None, :]).reshape(basis.shape[0], -1)
    converged = ~active

    def objective(a: np.ndarray, rows: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        # a holds the coefficients of the nodes in rows, in that order
        with np.errstate(over="ignore", invalid="ignore"):
            ew = np.exp(a @ basis.T) * weights
            value = np.sum(a * moments[rows], axis=1) - ew.sum(axis=1)
        return np.where(np.isfinite(value), value, -np.inf), ew

    value, ew = objective(coef, np.arange(moments.shape[0]))
    for _ in range(max_iter):
        grad = moments - ew @ basis
        converged = converged | (np.max(np.abs(grad), axis=1) < tol)
        todo = ~converged & np.isfinite(value)
        if not todo.any():
            break
        idx = np.flatnonzero(todo)
        hess = (ew[idx] @ outer).reshape(-1, 6, 6) + 1e-12 * np.eye(6)
        try:
            step = np.linalg.solve(hess, grad[idx][:, :, None])[:, :, 0]
        except np.linalg.LinAlgError:
            break
        t = np.ones(idx.shape[0])
        accepted = np.zeros(idx.shape[0], dtype=bool)
        for _ in range(30):
            trial = coef[idx] + t[:, None] * step
            trial_value, trial_ew = objective(trial, idx)
            ok = ~accepted & (trial_value >= value[idx] - 1e-14)
            if ok.any():
                rows = idx[ok]
                coef[rows] = trial[ok]
                value[rows] = trial_value[ok]
                ew[rows] = trial_ew[ok]
                accepted |= ok
            if accepted.all():
                break
            t = np.where(accepted, t, 0.5 * t)
        if not accepted.any():
            break
    grad = moments - ew @ basis
    converged = (np.max(np.abs(grad), axis=1) < tol) & np.all(np.isfinite(coef), axis=1)
    return coef, converged


def fit_grid_at_bandwidth(pseudo, bandwidth: float, config: SmootherConfig, grid_size: int | None = None) -> DensityGrid:
    """
    给定带宽拟合 probit 网格

    Args:
        pseudo: n×2 伪观测值
        bandwidth: 核带宽 h (probit 尺度)
        config: 网格与 Newton 配置
        grid_size: 覆盖 config.grid_size (交叉验证使用粗网格)
    """
    data = np.asarray(pseudo, dtype=float)
    m = grid_size or config.grid_size
    z_data = std_normal_quantile(np.clip(data, config.eps_u, 1.0 - config.eps_u))
    nodes = np.linspace(-config.z_max, config.z_max, m)
    g1, g2 = np.meshgrid(nodes, nodes, indexing="ij")
    centers = np.column_stack([g1.ravel(), g2.ravel()])

    moments = _kernel_moments(z_data, centers, bandwidth)
    kde = moments[:, 0].copy()
    active = kde > _MIN_KERNEL_MASS
    basis, weights = _quadrature(bandwidth, config.quadrature_nodes)
    coef, converged = _local_newton(moments, basis, weights, active, config.newton_max_iter, config.newton_tol)

    use_local = active & converged
    with np.errstate(over="ignore"):
        local = np.exp(coef[:, 0])
    use_local &= np.isfinite(local)
    values = np.where(use_local, local, np.maximum(kde, 0.0))
    fallback = int(np.sum(active & ~use_local))
    if fallback:
        logger.warning(f"Local likelihood fell back to the kernel estimate at {fallback} of {m * m} nodes")

    grid = DensityGrid(
        m=m, z_max=config.z_max, values=values.reshape(m, m), bandwidth=float(bandwidth),
        fallback_nodes=fallback, eps_u=config.eps_u,
    )
    mass = grid_mass(grid)
    if not (np.isfinite(mass) and mass > 0):
        raise EstimationError(ErrorCode.CANNOT_FIT, "probit grid has zero mass", data={"bandwidth": bandwidth})
    return DensityGrid(
        m=m, z_max=config.z_max, values=grid.values, bandwidth=float(bandwidth),
        normalization=1.0 / mass, fallback_nodes=fallback, eps_u=config.eps_u,
    )


# --- 持久化 ---

def save_grid(grid: DensityGrid, path: str) -> None:
    """首行：m z_max bandwidth normalization；其后按行优先写出 values"""
    header = f"{grid.m} {grid.z_max!r} {grid.bandwidth!r} {grid.normalization!r}"
    np.savetxt(path, grid.values, fmt="%.17g", header=header, comments="")


def load_grid(path: str, eps_u: float = 1e-10) -> DensityGrid:
    with open(path, "r", encoding="utf-8") as f:
        header = f.readline().split()
    try:
        m, z_max, bandwidth, normalization = int(header[0]), float(header[1]), float(header[2]), float(header[3])
    except (IndexError, ValueError) as exc:
        raise EstimationError(ErrorCode.MALFORMED_INPUT, f"bad density grid header in {path}") from exc
    values = np.loadtxt(path, skiprows=1, ndmin=2)
    return DensityGrid(m=m, z_max=z_max, values=values, bandwidth=bandwidth,
                       normalization=normalization, eps_u=eps_u)
