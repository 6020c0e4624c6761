"""数据模型定义 (Schemas)
- 各组件的配置模型，均可由全局 Settings 构建
- 模拟实验与 CLI 运行配置
"""
from enum import Enum
from typing import List, Optional

from pydantic import BaseModel, Field, field_validator, model_validator

from core.config import DEFAULT_FAMILIES, Settings, settings as default_settings


# --- Enums ---

class CopulaMode(str, Enum):
    """copula 估计策略"""
    SP = "SP"   # 非参数兴趣对 + 参数化噪声 vine
    P = "P"     # 全参数，结构数据驱动
    NP = "NP"   # 全非参数


class CensoringKind(str, Enum):
    """删失分布 G_C 的估计方式"""
    NONE = "none"   # 完整数据路径
    KM = "km"       # 无条件 Kaplan-Meier
    COX = "cox"     # 删失时间的 Cox 模型


class CoxBaseline(str, Enum):
    EXPONENTIAL = "exponential"
    BRESLOW = "breslow"


class DgpTag(str, Enum):
    A = "A"
    B = "B"
    C = "C"
    D = "D"
    M2 = "M2"
    DETTE = "DETTE"


# --- Component configs ---

class SmootherConfig(BaseModel):
    """probit 变换局部似然密度估计配置"""
    grid_size: int = Field(default=64, ge=8, description="每轴网格节点数 m")
    z_max: float = Field(default=3.2, gt=0, description="probit 网格范围 [-z_max, z_max]")
    newton_max_iter: int = Field(default=25, ge=1, description="局部 Newton 最大迭代次数")
    newton_tol: float = Field(default=1e-6, gt=0, description="局部 Newton 梯度容差")
    quadrature_nodes: int = Field(default=16, ge=4, description="每轴 Gauss-Hermite 节点数")
    nn_fractions: List[float] = Field(default_factory=lambda: [0.3, 0.45, 0.6, 0.8, 1.0], description="最近邻比例候选")
    cv_folds: int = Field(default=5, ge=2, description="带宽交叉验证折数")
    cv_grid_size: int = Field(default=32, ge=8, description="交叉验证时使用的粗网格")
    fold_seed: int = Field(default=0, description="交叉验证分折种子")
    min_n: int = Field(default=20, ge=1, description="最小样本量")
    eps_u: float = Field(default=1e-10, gt=0, description="边界截断")
    bandwidth: Optional[float] = Field(default=None, gt=0, description="固定带宽 (跳过选择)")

    @classmethod
    def from_settings(cls, config: Settings | None = None) -> "SmootherConfig":
        config = config or default_settings
        return cls(
            grid_size=config.smoother_grid_size,
            z_max=config.smoother_z_max,
            newton_max_iter=config.smoother_newton_max_iter,
            newton_tol=config.smoother_newton_tol,
            quadrature_nodes=config.smoother_quadrature_nodes,
            nn_fractions=config.get_nn_fractions(),
            cv_folds=config.smoother_cv_folds,
            cv_grid_size=config.smoother_cv_grid_size,
            fold_seed=config.smoother_fold_seed,
            min_n=config.smoother_min_n,
            eps_u=config.paircop_eps_u,
        )


class PairConfig(BaseModel):
    """参数化 pair-copula 配置"""
    eps_u: float = Field(default=1e-10, gt=0, description="边界截断")
    ml_xtol: float = Field(default=1e-9, gt=0, description="一维搜索区间容差")
    families: List[str] = Field(default_factory=lambda: list(DEFAULT_FAMILIES), description="候选族，如 clayton@90")

    @classmethod
    def from_settings(cls, config: Settings | None = None) -> "PairConfig":
        config = config or default_settings
        return cls(
            eps_u=config.paircop_eps_u,
            ml_xtol=config.paircop_ml_xtol,
            families=config.get_families(),
        )


class SurvivalConfig(BaseModel):
    """删失模型配置"""
    weight_floor: float = Field(default=1e-3, gt=0, lt=1, description="1 - G_C 的下限 ε_G")
    cox_ridge: float = Field(default=1e-8, ge=0, description="偏似然 Hessian 岭项")
    cox_tol: float = Field(default=1e-8, gt=0, description="梯度范数收敛阈值")
    cox_max_iter: int = Field(default=50, ge=1, description="Newton 最大迭代次数")
    cox_baseline: CoxBaseline = Field(default=CoxBaseline.EXPONENTIAL, description="基线估计方式")

    @classmethod
    def from_settings(cls, config: Settings | None = None) -> "SurvivalConfig":
        config = config or default_settings
        return cls(
            weight_floor=config.survival_weight_floor,
            cox_ridge=config.survival_cox_ridge,
            cox_tol=config.survival_cox_tol,
            cox_max_iter=config.survival_cox_max_iter,
            cox_baseline=config.survival_cox_baseline,
        )


class VineConfig(BaseModel):
    """vine 组装配置"""
    min_n: int = Field(default=30, ge=2, description="最小样本量")
    pair: PairConfig = Field(default_factory=PairConfig)
    smoother: SmootherConfig = Field(default_factory=SmootherConfig)

    @classmethod
    def from_settings(cls, config: Settings | None = None) -> "VineConfig":
        config = config or default_settings
        return cls(
            min_n=config.vine_min_n,
            pair=PairConfig.from_settings(config),
            smoother=SmootherConfig.from_settings(config),
        )


class EstimatorConfig(BaseModel):
    """条件分位数估计器配置"""
    mode: CopulaMode = Field(default=CopulaMode.SP, description="copula 策略")
    censoring: CensoringKind = Field(default=CensoringKind.KM, description="删失分布估计方式")
    min_events: int = Field(default=30, ge=1, description="最少未删失观测数")
    workers: int = Field(default=1, ge=1, description="留一交叉验证并行进程数")
    vine: VineConfig = Field(default_factory=VineConfig)
    survival: SurvivalConfig = Field(default_factory=SurvivalConfig)

    @classmethod
    def from_settings(
        cls,
        config: Settings | None = None,
        mode: CopulaMode = CopulaMode.SP,
        censoring: CensoringKind = CensoringKind.KM,
    ) -> "EstimatorConfig":
        config = config or default_settings
        return cls(
            mode=mode,
            censoring=censoring,
            min_events=config.cqr_min_events,
            workers=config.cqr_workers,
            vine=VineConfig.from_settings(config),
            survival=SurvivalConfig.from_settings(config),
        )

    @property
    def label(self) -> str:
        return f"{self.mode.value}:{self.censoring.value}"


# --- Simulation ---

CENSORING_LEVELS = (0.0, 0.3, 0.5)


class DgpSpec(BaseModel):
    """数据生成过程描述"""
    tag: DgpTag = Field(..., description="DGP 标识")
    n: int = Field(..., ge=0, description="样本量")
    censoring_level: float = Field(default=0.0, description="目标平均删失比例")

    @field_validator("censoring_level")
    @classmethod
    def _check_level(cls, value: float) -> float:
        if not any(abs(value - level) < 1e-12 for level in CENSORING_LEVELS):
            raise ValueError(f"censoring_level must be one of {CENSORING_LEVELS}")
        return float(value)

    @model_validator(mode="after")
    def _check_combination(self) -> "DgpSpec":
        if self.tag == DgpTag.DETTE and self.censoring_level != 0.0:
            raise ValueError("DETTE design has no censoring")
        if self.tag in (DgpTag.C, DgpTag.D, DgpTag.M2) and self.censoring_level == 0.0:
            raise ValueError(f"DGP {self.tag.value} is defined for censoring levels 0.3 and 0.5")
        return self


class EstimatorSpec(BaseModel):
    """实验中的一个估计器"""
    label: str = Field(..., min_length=1, description="输出列名")
    kind: str = Field(default="copula", pattern=r"^(copula|cox-ref|unconditional)$",
                      description="copula、参考 Cox 估计器或无条件分位数")
    mode: CopulaMode = Field(default=CopulaMode.SP)
    censoring: CensoringKind = Field(default=CensoringKind.KM)

    @property
    def reference_only(self) -> bool:
        return self.kind == "cox-ref"

    @classmethod
    def parse(cls, token: str) -> "EstimatorSpec":
        """
        解析命令行写法
        - MODE:CENSORING，如 SP:km、P:cox、NP:none
        - cox-ref / unconditional
        """
        token = token.strip()
        if token in ("cox-ref", "unconditional"):
            return cls(label=token, kind=token)
        mode, sep, censoring = token.partition(":")
        if not sep:
            censoring = CensoringKind.KM.value
        try:
            mode_value, censoring_value = CopulaMode(mode.upper()), CensoringKind(censoring.lower())
        except ValueError as exc:
            raise ValueError(f"invalid estimator '{token}', expected MODE:CENSORING, cox-ref or unconditional") from exc
        return cls(label=f"{mode_value.value}:{censoring_value.value}", mode=mode_value, censoring=censoring_value)


class ExperimentConfig(BaseModel):
    """Monte-Carlo 实验配置"""
    dgp: DgpSpec
    taus: List[float] = Field(default_factory=lambda: [0.3])
    estimators: List[EstimatorSpec] = Field(default_factory=lambda: [EstimatorSpec(label="SP:km")])
    B: int = Field(default=100, ge=1, description="重复次数")
    seed: int = Field(..., description="主种子")
    n_eval: int = Field(default=10, ge=1, description="评估点个数 N")
    workers: int = Field(default=1, ge=1, description="并行进程数")
    max_excluded_fraction: float = Field(default=0.02, ge=0, le=1)
    base: EstimatorConfig = Field(default_factory=EstimatorConfig, description="各估计器共享的调参")

    @field_validator("taus")
    @classmethod
    def _check_taus(cls, value: List[float]) -> List[float]:
        return validate_taus(value)


def validate_taus(taus: List[float]) -> List[float]:
    if not taus:
        raise ValueError("at least one tau is required")
    for tau in taus:
        if not 0.0 < tau < 1.0:
            raise ValueError(f"tau={tau} outside (0, 1)")
    if any(a > b for a, b in zip(taus, taus[1:])):
        raise ValueError("taus must be sorted")
    return [float(t) for t in taus]


# --- CLI ---

class RunConfig(BaseModel):
    """CLI 运行配置 (回显到 JSON sidecar)"""
    subcommand: str = Field(..., pattern=r"^(simulate|fit|predict|pe|dette-demo)$")
    dgp: Optional[DgpTag] = None
    n: Optional[int] = Field(default=None, ge=1)
    censoring: float = 0.0
    taus: List[float] = Field(default_factory=lambda: [0.3])
    estimators: List[str] = Field(default_factory=lambda: ["SP:km"], description="MODE:CENSORING 标签")
    B: int = Field(default=1, ge=1)
    seed: int = Field(..., description="全部随机性的来源，无时间默认值")
    input: Optional[str] = None
    points: Optional[str] = None
    out: str = "out"
    curve: bool = False
    families: List[str] = Field(default_factory=list)
    workers: int = Field(default=1, ge=1)
    export_data: Optional[str] = None
    config_file: Optional[str] = None

    @field_validator("taus")
    @classmethod
    def _check_taus(cls, value: List[float]) -> List[float]:
        return validate_taus(value)
