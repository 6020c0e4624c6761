"""Tests for leave-one-out prediction error."""
import numpy as np
import pytest

from core.error_codes import ErrorCode
from core.exceptions import EstimationError
from models.schemas import (
    CensoringKind,
    CopulaMode,
    DgpSpec,
    DgpTag,
    EstimatorConfig,
    PairConfig,
    SmootherConfig,
    VineConfig,
)
from services.cqr.cv import (
    CopulaFitter,
    FunctionFitter,
    UnconditionalFitter,
    cv_prediction_error,
    cv_prediction_errors,
)
from services.simlab.dgp import gen_dgp
from services.stats.core import check_loss
from services.survival.sample import ObservedSample


@pytest.fixture
def noiseless_sample(rng):
    x = rng.uniform(size=(40, 2))
    return ObservedSample.complete(2.0 * x[:, 0] - x[:, 1], x)


def _fast_copula_config() -> EstimatorConfig:
    return EstimatorConfig(
        mode=CopulaMode.SP,
        censoring=CensoringKind.KM,
        vine=VineConfig(
            pair=PairConfig(families=["independence", "gaussian"]),
            smoother=SmootherConfig(bandwidth=0.5, grid_size=16),
        ),
    )


class TestPredictionError:
    def test_oracle_is_zero(self, noiseless_sample):
        """正常: 无噪声数据上的完美预测器 PE = 0"""
        oracle = FunctionFitter(lambda x, tau: 2.0 * x[0] - x[1], label="oracle")
        errors = cv_prediction_errors(noiseless_sample, [0.1, 0.5, 0.9], oracle)
        assert errors == {0.1: 0.0, 0.5: 0.0, 0.9: 0.0}

    def test_constant_predictor(self, dgp_a_censored):
        """正常: 常数预测器的 PE 等于事件行检验损失的中位数"""
        constant = 0.45
        fitter = FunctionFitter(lambda x, tau: constant)
        events = dgp_a_censored.y[dgp_a_censored.delta]
        for tau in (0.3, 0.7):
            expected = float(np.median(check_loss(events - constant, tau)))
            assert cv_prediction_error(dgp_a_censored, tau, fitter) == pytest.approx(expected, abs=1e-15)

    def test_single_tau_matches_many(self, dgp_a_censored):
        fitter = UnconditionalFitter()
        errors = cv_prediction_errors(dgp_a_censored, [0.3, 0.5], fitter)
        assert cv_prediction_error(dgp_a_censored, 0.5, fitter) == errors[0.5]
        assert errors[0.3] > 0

    def test_parallel_matches_sequential(self, dgp_a_censored):
        """正常: 并行与顺序计算结果一致"""
        fitter = UnconditionalFitter()
        sequential = cv_prediction_errors(dgp_a_censored, [0.5], fitter, workers=1)
        parallel = cv_prediction_errors(dgp_a_censored, [0.5], fitter, workers=2)
        assert sequential == parallel

    def test_copula_fitter_reuses_selection(self):
        """正常: prepare() 在全样本上选择一次，各折复用"""
        sample = gen_dgp(DgpSpec(tag=DgpTag.A, n=60), np.random.default_rng(9)).sample
        fitter = CopulaFitter(config=_fast_copula_config())
        prepared = fitter.prepare(sample)
        assert prepared.selection is not None
        assert prepared.label == "SP:km"
        errors = cv_prediction_errors(sample, [0.3, 0.5], fitter)
        assert set(errors) == {0.3, 0.5}
        assert all(np.isfinite(v) and v >= 0 for v in errors.values())

    def test_fold_index_in_error(self, dgp_a_censored):
        """异常: 折内失败时错误带有折编号"""
        def failing(x, tau):
            raise EstimationError(ErrorCode.CANNOT_FIT, "boom")

        with pytest.raises(EstimationError) as exc:
            cv_prediction_errors(dgp_a_censored, [0.5], FunctionFitter(failing))
        first_event = int(np.flatnonzero(dgp_a_censored.delta)[0])
        assert exc.value.error_code == ErrorCode.CANNOT_FIT
        assert exc.value.data["fold"] == first_event

    def test_no_events(self):
        """异常: 没有事件行"""
        sample = ObservedSample(y=[1.0, 2.0], delta=[0, 0], x=[[0.1], [0.2]])
        with pytest.raises(EstimationError) as exc:
            cv_prediction_error(sample, 0.5, UnconditionalFitter())
        assert exc.value.error_code == ErrorCode.TOO_FEW_EVENTS

    @pytest.mark.slow
    def test_copula_beats_constant(self):
        """正常: DGP A，n=400，τ=0.3，SP 估计器的 PE 在 ≥90% 的种子上低于无条件分位数"""
        wins = 0
        seeds = range(20)
        for seed in seeds:
            sample = gen_dgp(DgpSpec(tag=DgpTag.A, n=400), np.random.default_rng(seed)).sample
            copula = cv_prediction_error(sample, 0.3, CopulaFitter(config=EstimatorConfig()), workers=4)
            constant = cv_prediction_error(sample, 0.3, UnconditionalFitter(), workers=4)
            wins += copula < constant
        assert wins >= 0.9 * len(seeds)
