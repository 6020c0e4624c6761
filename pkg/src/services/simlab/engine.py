"""重复实验引擎
- 主种子派生 B+1 个子种子：第 0 个生成评估点，第 b+1 个驱动第 b 次重复
- 各重复相互独立，可并行执行，结果与调度顺序无关
- 任一估计器失败的重复整体剔除并记录，剔除比例超过上限时实验无效
"""
import logging
import time
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from core.error_codes import ErrorCode
from core.exceptions import EstimationError
from core.parallel import parallel_map
from core.utils import spawn_seeds
from models.schemas import EstimatorConfig, EstimatorSpec, ExperimentConfig
from services.cqr.cv import CopulaFitter, CoxReferenceFitter, Fitter, UnconditionalFitter
from services.simlab.dgp import SimulatedData, gen_dgp, sample_covariates, true_quantile
from services.simlab.metrics import MIN_REPLICATIONS_FOR_QUARTILES, imae_and_dispersion, imse

logger = logging.getLogger(__name__)

IMSE_SCALE = 1000.0


def build_fitter(spec: EstimatorSpec, base: EstimatorConfig) -> Fitter:
    """按估计器描述构建拟合器，copula 估计器继承 base 的调参"""
    if spec.kind == "cox-ref":
        return CoxReferenceFitter(survival=base.survival, label=spec.label)
    if spec.kind == "unconditional":
        return UnconditionalFitter(survival=base.survival, label=spec.label)
    return CopulaFitter(config=base.model_copy(update={"mode": spec.mode, "censoring": spec.censoring}))


@dataclass(frozen=True)
class ReplicationOutcome:
    index: int
    estimates: Optional[Dict[str, Dict[float, np.ndarray]]]
    runtimes: Dict[str, float]
    censored_fraction: float
    error: Optional[dict] = None


@dataclass(frozen=True)
class _Replication:
    """单次重复：生成数据、拟合各估计器、在评估点预测"""
    config: ExperimentConfig
    eval_points: np.ndarray

    def __call__(self, task: Tuple[int, np.random.SeedSequence]) -> ReplicationOutcome:
        index, seed = task
        data = gen_dgp(self.config.dgp, np.random.default_rng(seed))
        sample = data.sample
        estimates: Dict[str, Dict[float, np.ndarray]] = {}
        runtimes: Dict[str, float] = {}
        for spec in self.config.estimators:
            start = time.perf_counter()
            try:
                model = build_fitter(spec, self.config.base).fit(sample)
                curves = np.array([model.predict_many(x, self.config.taus) for x in self.eval_points])
            except EstimationError as exc:
                logger.warning(f"Replication {index} excluded: {spec.label} failed with {exc.message}")
                return ReplicationOutcome(
                    index=index, estimates=None, runtimes=runtimes,
                    censored_fraction=sample.censoring_fraction,
                    error={"replication": index, "estimator": spec.label,
                           "code": exc.error_code.code, "message": exc.message},
                )
            runtimes[spec.label] = time.perf_counter() - start
            estimates[spec.label] = {tau: curves[:, k] for k, tau in enumerate(self.config.taus)}
        return ReplicationOutcome(index=index, estimates=estimates, runtimes=runtimes,
                                  censored_fraction=sample.censoring_fraction)


@dataclass
class ExperimentResult:
    """
    一次实验的全部结果
    estimates[label][tau] 为 (保留的重复数)×N 矩阵，聚合指标均可由其重算
    """
    config: ExperimentConfig
    eval_points: np.ndarray
    truths: Dict[float, np.ndarray]
    estimates: Dict[str, Dict[float, np.ndarray]]
    included: List[int]
    excluded: List[dict]
    censored_fractions: List[float]
    runtimes: Dict[str, float] = field(default_factory=dict)

    @property
    def excluded_fraction(self) -> float:
        return len(self.excluded) / self.config.B

    @property
    def valid(self) -> bool:
        return bool(self.included) and self.excluded_fraction <= self.config.max_excluded_fraction

    def metrics(self, label: str, tau: float) -> Dict[str, float]:
        """IMSE (含 ×1000)、IMAE 与离散度；重复数不足 4 时后两者为 nan"""
        values = self.estimates[label][tau]
        truths = self.truths[tau]
        result = {"imse": imse(values, truths)}
        result["imse_x1000"] = result["imse"] * IMSE_SCALE
        if values.shape[0] >= MIN_REPLICATIONS_FOR_QUARTILES:
            result["imae"], result["dispersion"] = imae_and_dispersion(values, truths)
        else:
            result["imae"], result["dispersion"] = float("nan"), float("nan")
        return result

    def raise_if_invalid(self) -> None:
        if not self.valid:
            raise EstimationError(
                ErrorCode.EXPERIMENT_INVALID,
                f"{len(self.excluded)} of {self.config.B} replications excluded "
                f"(limit {self.config.max_excluded_fraction:.0%})",
                data={"excluded": self.excluded},
            )

    def metadata(self) -> dict:
        return {
            "seed": self.config.seed,
            "dgp": self.config.dgp.model_dump(mode="json"),
            "B": self.config.B,
            "taus": self.config.taus,
            "estimators": [
                {**spec.model_dump(mode="json"), "reference_only": spec.reference_only}
                for spec in self.config.estimators
            ],
            "included": len(self.included),
            "excluded": self.excluded,
            "excluded_fraction": self.excluded_fraction,
            "valid": self.valid,
            "mean_censored_fraction": float(np.mean(self.censored_fractions)) if self.censored_fractions else None,
            "eval_points": self.eval_points,
            "runtimes_seconds": self.runtimes,
        }


def run_experiment(config: ExperimentConfig) -> ExperimentResult:
    """
    执行 Monte-Carlo 实验

    Raises:
        EstimationError: 评估点超出真值函数定义域等配置问题
    """
    started = time.perf_counter()
    seeds = spawn_seeds(config.seed, config.B + 1)
    eval_points = sample_covariates(config.dgp, config.n_eval, np.random.default_rng(seeds[0]))
    truths = {
        tau: np.array([true_quantile(config.dgp, x, tau) for x in eval_points])
        for tau in config.taus
    }
    logger.info(
        f"Running DGP {config.dgp.tag.value} n={config.dgp.n} censoring={config.dgp.censoring_level} "
        f"B={config.B} estimators={[s.label for s in config.estimators]}"
    )
    outcomes: List[ReplicationOutcome] = parallel_map(
        _Replication(config, eval_points), list(enumerate(seeds[1:])), workers=config.workers
    )

    kept = [o for o in outcomes if o.estimates is not None]
    estimates = {
        spec.label: {
            tau: np.array([o.estimates[spec.label][tau] for o in kept]).reshape(len(kept), config.n_eval)
            for tau in config.taus
        }
        for spec in config.estimators
    }
    runtimes = {
        spec.label: float(sum(o.runtimes.get(spec.label, 0.0) for o in outcomes))
        for spec in config.estimators
    }
    runtimes["total"] = time.perf_counter() - started
    result = ExperimentResult(
        config=config,
        eval_points=eval_points,
        truths=truths,
        estimates=estimates,
        included=[o.index for o in kept],
        excluded=[o.error for o in outcomes if o.error is not None],
        censored_fractions=[o.censored_fraction for o in outcomes],
        runtimes=runtimes,
    )
    if result.excluded:
        logger.warning(f"{len(result.excluded)} of {config.B} replications excluded")
    logger.info(f"Experiment finished in {runtimes['total']:.1f}s, valid={result.valid}")
    return result


def replication_data(config: ExperimentConfig, index: int) -> SimulatedData:
    """重建第 index 次重复所用的数据 (与 run_experiment 的种子派生一致)"""
    if not 0 <= index < config.B:
        raise EstimationError(ErrorCode.INVALID_ARGUMENT, f"replication index {index} outside [0, {config.B})")
    seeds = spawn_seeds(config.seed, config.B + 1)
    return gen_dgp(config.dgp, np.random.default_rng(seeds[index + 1]))
