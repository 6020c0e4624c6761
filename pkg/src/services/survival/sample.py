"""观测样本 (Y, Δ, X)"""
from dataclasses import dataclass

import numpy as np

from core.error_codes import ErrorCode
from core.exceptions import EstimationError


@dataclass(frozen=True)
class ObservedSample:
    """
    右删失观测样本
    - y: 观测时间 Y = min(T, C)
    - delta: 事件指示 Δ = 1(T ≤ C)
    - x: n×d 协变量矩阵
    """
    y: np.ndarray
    delta: np.ndarray
    x: np.ndarray

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float).ravel()
        delta = np.asarray(self.delta)
        x = np.asarray(self.x, dtype=float)
        if x.ndim == 1:
            x = x.reshape(-1, 1)
        if delta.dtype != bool:
            if not np.all(np.isin(delta, (0, 1))):
                raise EstimationError(ErrorCode.INVALID_ARGUMENT, "delta must contain only 0/1 values")
            delta = delta.astype(bool)
        delta = delta.ravel()
        if not (y.shape[0] == delta.shape[0] == x.shape[0]):
            raise EstimationError(
                ErrorCode.INVALID_ARGUMENT,
                f"length mismatch: y={y.shape[0]}, delta={delta.shape[0]}, x={x.shape[0]}",
            )
        if x.shape[1] < 1:
            raise EstimationError(ErrorCode.INVALID_ARGUMENT, "at least one covariate column is required")
        if not (np.all(np.isfinite(y)) and np.all(np.isfinite(x))):
            raise EstimationError(ErrorCode.INVALID_ARGUMENT, "y and x must be finite")
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "delta", delta)
        object.__setattr__(self, "x", x)

    @property
    def n(self) -> int:
        return int(self.y.shape[0])

    @property
    def d(self) -> int:
        return int(self.x.shape[1])

    @property
    def n_events(self) -> int:
        return int(self.delta.sum())

    @property
    def censoring_fraction(self) -> float:
        return 1.0 - self.n_events / self.n if self.n else 0.0

    def without(self, index: int) -> "ObservedSample":
        """去掉第 index 行 (留一交叉验证)"""
        keep = np.ones(self.n, dtype=bool)
        keep[index] = False
        return self.subset(keep)

    def subset(self, mask) -> "ObservedSample":
        return ObservedSample(self.y[mask], self.delta[mask], self.x[mask])

    @classmethod
    def complete(cls, y, x) -> "ObservedSample":
        """无删失样本 (Δ ≡ 1)"""
        y = np.asarray(y, dtype=float)
        return cls(y, np.ones(y.shape[0], dtype=bool), x)
