"""Tests for the simulation lab: DGPs, true quantiles, metrics, replication engine and the DETTE demo."""
import dataclasses

import numpy as np
import pytest
from pydantic import ValidationError

from core.error_codes import ErrorCode
from core.exceptions import EstimationError
from models.schemas import (
    CensoringKind,
    CopulaMode,
    DgpSpec,
    DgpTag,
    EstimatorConfig,
    EstimatorSpec,
    ExperimentConfig,
    PairConfig,
    SmootherConfig,
    VineConfig,
)
from services.cqr.cv import CopulaFitter, CoxReferenceFitter, UnconditionalFitter
from services.cqr.estimator import fit_estimator, predict_curve
from services.simlab.demo import CURVE_POINTS, curve_mse, dette_curves
from services.simlab.dgp import (
    COX_COVARIATE_CORR,
    DGP_A_CORR,
    DGP_B_CORR,
    censoring_probability,
    conditional_quantile_oracle,
    cox_linear_predictor,
    expected_censoring_fraction,
    gen_dgp,
    sample_covariates,
    sample_gaussian_copula,
    true_quantile,
)
from services.simlab.engine import build_fitter, replication_data, run_experiment
from services.simlab.metrics import imae_and_dispersion, imse
from services.stats.core import kendall_tau
from services.survival.sample import ObservedSample

FAST_BASE = EstimatorConfig(vine=VineConfig(
    pair=PairConfig(families=["independence", "gaussian", "frank"]),
    smoother=SmootherConfig(bandwidth=0.5, grid_size=16),
))


def _experiment(**overrides) -> ExperimentConfig:
    values = dict(
        dgp=DgpSpec(tag=DgpTag.A, n=60),
        taus=[0.3, 0.5],
        estimators=[EstimatorSpec.parse("SP:km"), EstimatorSpec.parse("unconditional")],
        B=2,
        seed=42,
        n_eval=3,
        base=FAST_BASE,
    )
    values.update(overrides)
    return ExperimentConfig(**values)


class TestGaussianCopulaSampler:
    @pytest.mark.parametrize("rho", [0.3, 0.5, 0.9])
    def test_kendall_tau(self, rho, rng):
        """正常: 经验 Kendall tau 与 (2/π)arcsin(ρ) 相差 < 0.03"""
        u = sample_gaussian_copula([[1.0, rho], [rho, 1.0]], 20000, rng)
        assert kendall_tau(u[:, 0], u[:, 1]) == pytest.approx(2.0 / np.pi * np.arcsin(rho), abs=0.03)

    def test_identity_is_independent(self, rng):
        u = sample_gaussian_copula(np.eye(3), 20000, rng)
        for i, j in ((0, 1), (0, 2), (1, 2)):
            assert abs(kendall_tau(u[:, i], u[:, j])) < 0.02
        assert np.all((u > 0) & (u < 1))

    def test_zero_rows(self, rng):
        """边界: n=0 返回空矩阵"""
        assert sample_gaussian_copula(DGP_A_CORR, 0, rng).shape == (0, 3)

    @pytest.mark.parametrize("corr", [DGP_A_CORR, DGP_B_CORR, COX_COVARIATE_CORR])
    def test_design_matrices_positive_definite(self, corr, rng):
        assert sample_gaussian_copula(corr, 5, rng).shape == (5, corr.shape[0])

    def test_not_positive_definite(self, rng):
        """异常: 非正定矩阵"""
        corr = [[1.0, 0.9, -0.9], [0.9, 1.0, 0.9], [-0.9, 0.9, 1.0]]
        with pytest.raises(EstimationError) as exc:
            sample_gaussian_copula(corr, 10, rng)
        assert exc.value.error_code == ErrorCode.DECOMPOSITION

    def test_not_symmetric(self, rng):
        with pytest.raises(EstimationError) as exc:
            sample_gaussian_copula([[1.0, 0.2], [0.3, 1.0]], 10, rng)
        assert exc.value.error_code == ErrorCode.DECOMPOSITION


class TestDgpSpec:
    def test_dette_has_no_censoring(self):
        """异常: DETTE 不允许删失"""
        with pytest.raises(ValidationError):
            DgpSpec(tag=DgpTag.DETTE, n=100, censoring_level=0.3)

    @pytest.mark.parametrize("tag", [DgpTag.C, DgpTag.D, DgpTag.M2])
    def test_cox_designs_need_censoring(self, tag):
        with pytest.raises(ValidationError):
            DgpSpec(tag=tag, n=100)

    def test_unknown_level(self):
        with pytest.raises(ValidationError):
            DgpSpec(tag=DgpTag.A, n=100, censoring_level=0.4)


class TestGenDgp:
    @pytest.mark.parametrize("tag, level, d", [
        (DgpTag.A, 0.3, 2), (DgpTag.B, 0.5, 3), (DgpTag.C, 0.3, 5),
        (DgpTag.D, 0.5, 5), (DgpTag.M2, 0.3, 5), (DgpTag.DETTE, 0.0, 1),
    ])
    def test_shapes(self, tag, level, d, rng):
        data = gen_dgp(DgpSpec(tag=tag, n=50, censoring_level=level), rng)
        assert data.sample.x.shape == (50, d)
        assert data.latent_t.shape == (50,)

    def test_observed_is_min_of_latent(self, rng):
        """正常: Y = min(T, C)，Δ=1 当且仅当 Y = T"""
        data = gen_dgp(DgpSpec(tag=DgpTag.C, n=500, censoring_level=0.5), rng)
        assert np.all(data.sample.y <= data.latent_t)
        assert np.array_equal(data.sample.delta, data.sample.y == data.latent_t)

    def test_latent_truth_not_exposed(self, rng):
        """正常: 估计器看到的样本只有 (Y, Δ, X)"""
        data = gen_dgp(DgpSpec(tag=DgpTag.A, n=20, censoring_level=0.3), rng)
        assert [f.name for f in dataclasses.fields(data.sample)] == ["y", "delta", "x"]
        assert isinstance(data.sample, ObservedSample)

    def test_no_censoring(self, rng):
        data = gen_dgp(DgpSpec(tag=DgpTag.A, n=100), rng)
        assert data.sample.delta.all()
        assert np.array_equal(data.sample.y, data.latent_t)

    def test_dette_design(self, rng):
        data = gen_dgp(DgpSpec(tag=DgpTag.DETTE, n=500), rng)
        residual = data.sample.y - (data.sample.x[:, 0] - 0.5) ** 2
        assert np.std(residual) == pytest.approx(0.025, abs=0.003)

    def test_reproducible(self):
        spec = DgpSpec(tag=DgpTag.B, n=30, censoring_level=0.3)
        first = gen_dgp(spec, np.random.default_rng(1)).sample
        second = gen_dgp(spec, np.random.default_rng(1)).sample
        assert np.array_equal(first.y, second.y) and np.array_equal(first.x, second.x)

    @pytest.mark.parametrize("tag, level, d", [(DgpTag.A, 0.0, 2), (DgpTag.C, 0.3, 5), (DgpTag.DETTE, 0.0, 1)])
    def test_empty(self, tag, level, d, rng):
        """边界: n=0 得到 0×d 的协变量矩阵"""
        data = gen_dgp(DgpSpec(tag=tag, n=0, censoring_level=level), rng)
        assert data.sample.n == 0
        assert data.sample.x.shape == (0, d)
        assert data.latent_t.shape == (0,)


class TestCensoringCalibration:
    @pytest.mark.parametrize("tag, level", [
        (DgpTag.A, 0.3), (DgpTag.A, 0.5), (DgpTag.B, 0.3), (DgpTag.B, 0.5), (DgpTag.D, 0.3), (DgpTag.D, 0.5),
    ])
    def test_matches_target(self, tag, level, rng):
        """正常: n=20000 的经验删失比例与目标相差 < 0.02"""
        sample = gen_dgp(DgpSpec(tag=tag, n=20000, censoring_level=level), rng).sample
        assert sample.censoring_fraction == pytest.approx(level, abs=0.02)

    @pytest.mark.parametrize("tag, level", [
        (DgpTag.C, 0.3), (DgpTag.C, 0.5), (DgpTag.M2, 0.3), (DgpTag.M2, 0.5),
    ])
    def test_cox_designs(self, tag, level, rng):
        """正常: 经验删失比例与精确期望相差 < 0.01"""
        spec = DgpSpec(tag=tag, n=20000, censoring_level=level)
        expected = expected_censoring_fraction(spec, rng)
        if tag == DgpTag.C:
            assert expected == pytest.approx(level, abs=0.035)
        assert gen_dgp(spec, rng).sample.censoring_fraction == pytest.approx(expected, abs=0.01)

    def test_dgp_a_center_point(self):
        """正常: DGP A 在 x=(0.5,0.5)，M=5/3 → P(C<T|x) = 0.5/M = 0.3"""
        spec = DgpSpec(tag=DgpTag.A, n=1, censoring_level=0.3)
        assert censoring_probability(spec, [0.5, 0.5]) == pytest.approx(0.3, abs=1e-12)

    def test_dgp_d_constant(self):
        spec = DgpSpec(tag=DgpTag.D, n=1, censoring_level=0.3)
        assert censoring_probability(spec, [0.1, 0.9, 0.5, 0.2, 0.7]) == pytest.approx(0.3)

    def test_conditional_probability_by_simulation(self, rng):
        """正常: 固定 x 下模拟的删失比例与闭式一致"""
        spec = DgpSpec(tag=DgpTag.C, n=1, censoring_level=0.5)
        x = np.array([0.2, 0.7, 0.4, 0.6, 0.3])
        eta = cox_linear_predictor(DgpTag.C, x)[0]
        t = rng.standard_exponential(200_000) / np.exp(eta)
        c = rng.exponential(1.0 / 1.083, size=200_000)
        assert np.mean(c < t) == pytest.approx(censoring_probability(spec, x), abs=0.005)

    def test_uncensored_level(self):
        assert censoring_probability(DgpSpec(tag=DgpTag.A, n=1), [0.3, 0.3]) == 0.0


class TestTrueQuantile:
    def test_dgp_a_center(self):
        """正常: DGP A，x=(0.5,0.5)，τ=0.5 → 0.5"""
        assert true_quantile(DgpSpec(tag=DgpTag.A, n=1), [0.5, 0.5], 0.5) == pytest.approx(0.5, abs=1e-12)

    def test_dgp_a_lower_quantile(self):
        """正常: τ=0.3 → Φ(0.4·Φ⁻¹(0.3)) ≈ 0.4169"""
        assert true_quantile(DgpSpec(tag=DgpTag.A, n=1), [0.5, 0.5], 0.3) == pytest.approx(0.4169, abs=1e-4)

    def test_dgp_c_zero_predictor(self):
        """正常: βᵀx = 0，τ=0.5 → log 2"""
        spec = DgpSpec(tag=DgpTag.C, n=1, censoring_level=0.3)
        assert true_quantile(spec, np.zeros(5), 0.5) == pytest.approx(0.6931, abs=1e-4)

    def test_model2_uses_transformed_covariate(self):
        spec = DgpSpec(tag=DgpTag.M2, n=1, censoring_level=0.3)
        x = np.array([0.0, 0.0, 0.0, 0.0, 0.0])
        # exp(0) = 1 → βᵀx = −0.75
        assert true_quantile(spec, x, 0.5) == pytest.approx(np.log(2.0) * np.exp(0.75))

    def test_dette(self):
        spec = DgpSpec(tag=DgpTag.DETTE, n=1)
        assert true_quantile(spec, [0.5], 0.5) == pytest.approx(0.0, abs=1e-15)
        assert true_quantile(spec, [0.9], 0.5) == pytest.approx(0.16)

    def test_wrong_dimension(self):
        """异常: 维数不符"""
        with pytest.raises(EstimationError) as exc:
            true_quantile(DgpSpec(tag=DgpTag.A, n=1), [0.5], 0.5)
        assert exc.value.error_code == ErrorCode.INVALID_ARGUMENT

    def test_tau_domain(self):
        with pytest.raises(EstimationError) as exc:
            true_quantile(DgpSpec(tag=DgpTag.C, n=1, censoring_level=0.3), np.zeros(5), 1.0)
        assert exc.value.error_code == ErrorCode.DOMAIN_ERROR

    @pytest.mark.parametrize("tag, level", [
        (DgpTag.A, 0.0), (DgpTag.B, 0.3), (DgpTag.C, 0.3), (DgpTag.D, 0.5), (DgpTag.M2, 0.3), (DgpTag.DETTE, 0.0),
    ])
    def test_agrees_with_simulation_oracle(self, tag, level, rng):
        """正常: 5 个随机 x 上闭式真值与 10⁶ 次条件模拟相差 < 0.01"""
        spec = DgpSpec(tag=tag, n=1, censoring_level=level)
        for x in sample_covariates(spec, 5, rng):
            for tau in (0.3, 0.7):
                oracle = conditional_quantile_oracle(spec, x, tau, rng)
                assert true_quantile(spec, x, tau) == pytest.approx(oracle, rel=0.01, abs=0.01)


class TestMetrics:
    def test_imse(self):
        estimates = np.array([[1.0, 2.0], [3.0, 2.0]])
        assert imse(estimates, [2.0, 2.0]) == pytest.approx(0.5)

    def test_imae_and_dispersion(self):
        """正常: 单点误差 {1,2,3,4} → 中位数 2.5，四分位距 1.5"""
        estimates = np.array([[1.0], [2.0], [3.0], [4.0]])
        imae, dispersion = imae_and_dispersion(estimates, [0.0])
        assert imae == pytest.approx(2.5)
        assert dispersion == pytest.approx(1.5)

    def test_too_few_replications(self):
        """异常: B < 4 时无法计算四分位数"""
        with pytest.raises(EstimationError) as exc:
            imae_and_dispersion(np.ones((3, 2)), [0.0, 0.0])
        assert exc.value.error_code == ErrorCode.PRECONDITION

    def test_shape_mismatch(self):
        with pytest.raises(EstimationError) as exc:
            imse(np.ones((4, 2)), [0.0, 0.0, 0.0])
        assert exc.value.error_code == ErrorCode.INVALID_ARGUMENT

    def test_empty(self):
        with pytest.raises(EstimationError) as exc:
            imse(np.empty((0, 2)), [0.0, 0.0])
        assert exc.value.error_code == ErrorCode.EMPTY_SAMPLE


class TestEngine:
    def test_build_fitter(self):
        assert isinstance(build_fitter(EstimatorSpec.parse("cox-ref"), FAST_BASE), CoxReferenceFitter)
        assert isinstance(build_fitter(EstimatorSpec.parse("unconditional"), FAST_BASE), UnconditionalFitter)
        fitter = build_fitter(EstimatorSpec.parse("NP:none"), FAST_BASE)
        assert isinstance(fitter, CopulaFitter)
        assert fitter.config.mode == CopulaMode.NP
        assert fitter.config.censoring == CensoringKind.NONE
        assert fitter.config.vine == FAST_BASE.vine

    def test_result_structure(self):
        """正常: B=2 时估计矩阵为 2×N，四分位指标为 nan"""
        result = run_experiment(_experiment())
        assert result.valid
        assert result.included == [0, 1]
        assert result.excluded == []
        assert result.eval_points.shape == (3, 2)
        for label in ("SP:km", "unconditional"):
            for tau in (0.3, 0.5):
                assert result.estimates[label][tau].shape == (2, 3)
        metrics = result.metrics("SP:km", 0.3)
        assert metrics["imse_x1000"] == pytest.approx(1000.0 * metrics["imse"])
        assert np.isnan(metrics["imae"]) and np.isnan(metrics["dispersion"])
        assert set(result.runtimes) == {"SP:km", "unconditional", "total"}

    def test_truths_at_eval_points(self):
        config = _experiment()
        result = run_experiment(config)
        for k, x in enumerate(result.eval_points):
            assert result.truths[0.3][k] == true_quantile(config.dgp, x, 0.3)

    def test_deterministic(self):
        """正常: 相同种子的两次运行结果逐位一致"""
        first = run_experiment(_experiment())
        second = run_experiment(_experiment())
        assert np.array_equal(first.eval_points, second.eval_points)
        for label in first.estimates:
            for tau in first.estimates[label]:
                assert np.array_equal(first.estimates[label][tau], second.estimates[label][tau])

    def test_parallel_matches_sequential(self):
        """正常: 并行执行与顺序执行结果一致"""
        config = _experiment(estimators=[EstimatorSpec.parse("unconditional")], B=4)
        sequential = run_experiment(config)
        parallel = run_experiment(config.model_copy(update={"workers": 2}))
        assert np.array_equal(sequential.estimates["unconditional"][0.3], parallel.estimates["unconditional"][0.3])

    def test_replication_data_reproduces_run(self):
        """正常: 重建的第 b 次数据与实验所用数据一致"""
        config = _experiment()
        result = run_experiment(config)
        data = replication_data(config, 1)
        estimator = fit_estimator(data.sample, config=FAST_BASE)
        for k, x in enumerate(result.eval_points):
            curve = predict_curve(estimator, x, config.taus)
            assert curve.values[0] == result.estimates["SP:km"][0.3][1, k]

    def test_replication_index_range(self):
        with pytest.raises(EstimationError):
            replication_data(_experiment(), 2)

    def test_failed_replications_excluded(self):
        """异常: 所有重复失败时实验无效"""
        config = _experiment(base=FAST_BASE.model_copy(update={"min_events": 1000}))
        result = run_experiment(config)
        assert result.included == []
        assert len(result.excluded) == 2
        assert result.excluded[0]["estimator"] == "SP:km"
        assert result.excluded[0]["code"] == ErrorCode.TOO_FEW_EVENTS.code
        assert not result.valid
        with pytest.raises(EstimationError) as exc:
            result.raise_if_invalid()
        assert exc.value.error_code == ErrorCode.EXPERIMENT_INVALID

    def test_metadata(self):
        result = run_experiment(_experiment())
        metadata = result.metadata()
        assert metadata["seed"] == 42
        assert metadata["valid"] is True
        assert metadata["estimators"][1]["reference_only"] is False
        assert metadata["dgp"]["tag"] == "A"


class TestDetteDemo:
    def test_curve_table(self):
        """正常: 101 行 × 4 列的曲线表"""
        base = EstimatorConfig(vine=VineConfig(smoother=SmootherConfig(bandwidth=0.3, grid_size=24)))
        frame = dette_curves(seed=3, base=base, n=200)
        assert list(frame.columns) == ["x", "truth", "parametric", "nonparametric"]
        assert len(frame) == CURVE_POINTS
        assert frame["x"].iloc[0] == 0.0 and frame["x"].iloc[-1] == 1.0
        assert frame["truth"].iloc[50] == pytest.approx(0.0, abs=1e-12)
        assert curve_mse(frame, "truth") == 0.0

    @pytest.mark.slow
    def test_nonparametric_beats_gaussian(self):
        """正常: 25 个种子中至少 23 个非参数拟合的 MSE 更低"""
        wins = 0
        for seed in range(25):
            frame = dette_curves(seed=seed)
            wins += curve_mse(frame, "nonparametric") < curve_mse(frame, "parametric")
        assert wins >= 23


@pytest.mark.slow
class TestMonteCarloAcceptance:
    def _imse(self, n: int, level: float, mode: str = "SP", seed: int = 1) -> float:
        config = ExperimentConfig(
            dgp=DgpSpec(tag=DgpTag.A, n=n, censoring_level=level),
            taus=[0.3],
            estimators=[EstimatorSpec.parse(f"{mode}:km")],
            B=100,
            seed=seed,
            workers=4,
        )
        result = run_experiment(config)
        result.raise_if_invalid()
        return result.metrics(f"{mode}:km", 0.3)["imse_x1000"]

    def test_dgp_a_scale_and_rate(self):
        """正常: n=400 的 IMSE×1000 ∈ [0.15, 1.2]，且 IMSE(400)/IMSE(200) < 0.9"""
        at_400 = self._imse(400, 0.0)
        at_200 = self._imse(200, 0.0)
        assert 0.15 <= at_400 <= 1.2
        assert at_400 / at_200 < 0.9

    def test_nonparametric_noisy_vine_is_worse(self):
        assert self._imse(400, 0.0, mode="NP") > self._imse(400, 0.0, mode="SP")

    def test_censoring_increases_error(self):
        assert self._imse(200, 0.5) > self._imse(200, 0.0)

    def test_monotone_curves_sweep(self):
        """正常: 多种 DGP / 模式 / 删失组合的拟合曲线无单调性违例"""
        taus = [round(0.05 * k, 2) for k in range(1, 20)]
        rng = np.random.default_rng(99)
        designs = [(DgpTag.A, 0.0), (DgpTag.A, 0.5), (DgpTag.B, 0.3), (DgpTag.C, 0.3)]
        for tag, level in designs:
            spec = DgpSpec(tag=tag, n=200, censoring_level=level)
            sample = gen_dgp(spec, rng).sample
            for mode in CopulaMode:
                for censoring in (CensoringKind.KM, CensoringKind.COX):
                    if level == 0.0 and censoring == CensoringKind.COX:
                        continue
                    estimator = fit_estimator(sample, mode, censoring)
                    for x in sample_covariates(spec, 10, rng):
                        assert predict_curve(estimator, x, taus).is_monotone()
