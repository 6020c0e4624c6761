"""Tests for R-vine fitting and the SP / NP / P copula assemblies."""
import numpy as np
import pytest
from scipy import stats

from core.error_codes import ErrorCode
from core.exceptions import EstimationError
from models.schemas import CopulaMode, PairConfig, SmootherConfig, VineConfig
from services.paircop.families import FamilyTag, ParametricPair, select_pair_aic
from services.paircop.grid import DensityGrid
from services.simlab.dgp import sample_gaussian_copula
from services.stats.core import pseudo_observations
from services.vine.rvine import RVine, VineEdge, fit_rvine, validate_structure
from services.vine.vine import (
    conditional_pseudo,
    describe_vine,
    eval_copula_density,
    fit_vine,
)

CORR_4 = np.array([
    [1.0, 0.6, 0.3, 0.2],
    [0.6, 1.0, 0.5, 0.3],
    [0.3, 0.5, 1.0, 0.4],
    [0.2, 0.3, 0.4, 1.0],
])


@pytest.fixture
def fast_config():
    return VineConfig(
        pair=PairConfig(families=["independence", "gaussian", "clayton", "gumbel"]),
        smoother=SmootherConfig(bandwidth=0.5, grid_size=24),
    )


def _gaussian_fitter(data, template):
    return select_pair_aic(data, ["gaussian"])


def _pseudo_parts(sample):
    return pseudo_observations(sample.y), pseudo_observations(sample.x)


def _gaussian_three_vine(r01: float, r12: float, r02: float) -> RVine:
    partial = (r02 - r01 * r12) / np.sqrt((1 - r01 ** 2) * (1 - r12 ** 2))
    tree0 = (
        VineEdge(tree=0, conditioned=(0, 1), conditioning=(), parents=None, pair=ParametricPair.of("gaussian", r01)),
        VineEdge(tree=0, conditioned=(1, 2), conditioning=(), parents=None, pair=ParametricPair.of("gaussian", r12)),
    )
    tree1 = (
        VineEdge(tree=1, conditioned=(0, 2), conditioning=(1,), parents=(0, 1),
                 pair=ParametricPair.of("gaussian", partial)),
    )
    return RVine(dim=3, trees=(tree0, tree1))


class TestRVine:
    def test_structure_is_valid(self, rng):
        """正常: 4 维数据的逐层最大生成树满足树性与邻近条件"""
        data = pseudo_observations(sample_gaussian_copula(CORR_4, 400, rng))
        vine = fit_rvine(data, _gaussian_fitter)
        assert [len(tree) for tree in vine.trees] == [3, 2, 1]
        assert validate_structure(vine) == []

    def test_first_tree_uses_strongest_pairs(self, rng):
        """正常: 第一层包含 |tau| 最大的边"""
        data = pseudo_observations(sample_gaussian_copula(CORR_4, 2000, rng))
        vine = fit_rvine(data, _gaussian_fitter)
        assert (0, 1) in [edge.conditioned for edge in vine.trees[0]]

    def test_gaussian_vine_matches_gaussian_copula(self):
        """正常: 3 维 gaussian D-vine 的密度等于对应 Gaussian copula 密度"""
        r01, r12, r02 = 0.5, 0.4, 0.3
        vine = _gaussian_three_vine(r01, r12, r02)
        corr = np.array([[1.0, r01, r02], [r01, 1.0, r12], [r02, r12, 1.0]])
        u = np.array([[0.2, 0.4, 0.7], [0.5, 0.5, 0.5], [0.9, 0.3, 0.6]])
        z = stats.norm.ppf(u)
        expected = stats.multivariate_normal(mean=np.zeros(3), cov=corr).pdf(z) / np.prod(stats.norm.pdf(z), axis=1)
        assert np.allclose(vine.density(u), expected, rtol=1e-8)
        assert validate_structure(vine) == []

    def test_template_reuses_structure(self, rng):
        """正常: 复用模板时结构与族保持不变，只重估参数"""
        data = pseudo_observations(sample_gaussian_copula(CORR_4, 300, rng))
        vine = fit_rvine(data, _gaussian_fitter)
        other = pseudo_observations(sample_gaussian_copula(CORR_4, 300, rng))
        refit = fit_rvine(other, _gaussian_fitter, template=vine)
        assert [e.label for e in refit.edges] == [e.label for e in vine.edges]
        assert [e.pair.theta for e in refit.edges] != [e.pair.theta for e in vine.edges]

    def test_template_dimension_mismatch(self, rng):
        vine = _gaussian_three_vine(0.5, 0.4, 0.3)
        with pytest.raises(EstimationError) as exc:
            fit_rvine(rng.uniform(size=(50, 4)), _gaussian_fitter, template=vine)
        assert exc.value.error_code == ErrorCode.INVALID_ARGUMENT

    def test_cycle_detected(self):
        """异常: 同一层重复的边构成环"""
        pair = ParametricPair.independence()
        edge = VineEdge(tree=0, conditioned=(0, 1), conditioning=(), parents=None, pair=pair)
        broken = RVine(dim=3, trees=((edge, edge), (VineEdge(1, (0, 2), (1,), (0, 1), pair),)))
        problems = validate_structure(broken)
        assert any("cycle" in p for p in problems)

    def test_wrong_tree_count(self):
        problems = validate_structure(RVine(dim=3, trees=()))
        assert problems == ["expected 2 trees, found 0"]

    def test_column_mismatch(self):
        with pytest.raises(EstimationError) as exc:
            _gaussian_three_vine(0.5, 0.4, 0.3).log_density(np.full((2, 4), 0.5))
        assert exc.value.error_code == ErrorCode.INVALID_ARGUMENT

    def test_describe(self):
        description = _gaussian_three_vine(0.5, 0.4, 0.3).describe()
        assert description["dim"] == 3
        assert description["trees"][1][0]["edge"] == "0,2|1"


class TestFitVine:
    def test_sp_mode(self, dgp_a_sample, fast_config):
        """正常: SP 兴趣对为网格，噪声 vine 为参数化族"""
        u0, x = _pseudo_parts(dgp_a_sample)
        model = fit_vine(u0, x, CopulaMode.SP, fast_config)
        assert len(model.interest_pairs) == 2
        assert all(isinstance(p, DensityGrid) for p in model.interest_pairs)
        assert model.noisy.dim == 2
        assert all(isinstance(e.pair, ParametricPair) for e in model.noisy.edges)
        assert model.joint is None

    def test_np_mode(self, dgp_a_sample, fast_config):
        u0, x = _pseudo_parts(dgp_a_sample)
        model = fit_vine(u0, x, CopulaMode.NP, fast_config)
        assert all(isinstance(e.pair, DensityGrid) for e in model.noisy.edges)

    def test_p_mode(self, dgp_a_sample, fast_config):
        """正常: P 为 (U0, X) 上的全参数 R-vine，无兴趣对"""
        u0, x = _pseudo_parts(dgp_a_sample)
        model = fit_vine(u0, x, CopulaMode.P, fast_config)
        assert model.interest_pairs == ()
        assert model.joint.dim == 3
        assert validate_structure(model.joint) == []

    def test_single_covariate_has_no_noisy_vine(self, dgp_a_sample, fast_config):
        """边界: d=1 时仅有兴趣对"""
        u0, x = _pseudo_parts(dgp_a_sample)
        model = fit_vine(u0, x[:, :1], CopulaMode.SP, fast_config)
        assert model.noisy is None
        assert eval_copula_density(model, 0.5, [0.5]) == pytest.approx(model.interest_pairs[0].density(0.5, 0.5))

    def test_selection_reuse(self, dgp_a_sample, fast_config, rng):
        """正常: 复用选择结果时带宽与族不变"""
        u0, x = _pseudo_parts(dgp_a_sample)
        model = fit_vine(u0, x, CopulaMode.SP, fast_config)
        keep = rng.uniform(size=u0.shape[0]) < 0.9
        refit = fit_vine(u0[keep], x[keep], CopulaMode.SP, fast_config, selection=model.selection())
        assert [p.bandwidth for p in refit.interest_pairs] == [p.bandwidth for p in model.interest_pairs]
        assert [str(e.pair.family) for e in refit.noisy.edges] == [str(e.pair.family) for e in model.noisy.edges]

    def test_independent_covariates_give_weak_edge(self, rng):
        """正常: 相互独立的协变量，对应边接近独立"""
        config = VineConfig(pair=PairConfig(families=["independence", "gaussian"]))
        n = 300
        x = rng.uniform(size=(n, 2))
        u0 = pseudo_observations(x[:, 0] + 0.5 * rng.uniform(size=n))
        model = fit_vine(u0, pseudo_observations(x), CopulaMode.P, config)
        edge = next(e for e in model.joint.edges if set(e.conditioned) == {1, 2})
        assert abs(edge.tau) < 0.15
        if edge.pair.family.tag == FamilyTag.GAUSSIAN:
            assert abs(edge.pair.theta) < 0.2

    def test_density_positive(self, dgp_a_sample, fast_config):
        u0, x = _pseudo_parts(dgp_a_sample)
        model = fit_vine(u0, x, CopulaMode.SP, fast_config)
        values = model.density(u0[:10], x[:10])
        assert values.shape == (10,)
        assert np.all(values > 0)

    def test_conditional_pseudo_clamped(self, dgp_a_sample, fast_config):
        u0, x = _pseudo_parts(dgp_a_sample)
        model = fit_vine(u0, x, CopulaMode.SP, fast_config)
        v = conditional_pseudo(u0, x[:, 0], model.interest_pairs[0])
        assert np.all((v > 0) & (v < 1))

    def test_describe(self, dgp_a_sample, fast_config):
        u0, x = _pseudo_parts(dgp_a_sample)
        description = describe_vine(fit_vine(u0, x, CopulaMode.SP, fast_config))
        assert description["mode"] == "SP"
        assert description["valid"] is True
        assert len(description["interest_pairs"]) == 2

    def test_wrong_covariate_count(self, dgp_a_sample, fast_config):
        u0, x = _pseudo_parts(dgp_a_sample)
        model = fit_vine(u0, x, CopulaMode.SP, fast_config)
        with pytest.raises(EstimationError):
            model.density(0.5, [0.5, 0.5, 0.5])

    def test_too_few_rows(self, fast_config):
        """异常: n < min_n"""
        with pytest.raises(EstimationError) as exc:
            fit_vine(np.full(10, 0.5), np.full((10, 2), 0.5), CopulaMode.SP, fast_config)
        assert exc.value.error_code == ErrorCode.PRECONDITION

    def test_length_mismatch(self, fast_config):
        with pytest.raises(EstimationError) as exc:
            fit_vine(np.full(40, 0.5), np.full((41, 2), 0.5), CopulaMode.SP, fast_config)
        assert exc.value.error_code == ErrorCode.INVALID_ARGUMENT

    def test_edge_failure_is_annotated(self, dgp_a_sample):
        """异常: 兴趣对拟合失败时错误带有边标识"""
        config = VineConfig(smoother=SmootherConfig(min_n=500))
        u0, x = _pseudo_parts(dgp_a_sample)
        with pytest.raises(EstimationError) as exc:
            fit_vine(u0, x, CopulaMode.SP, config)
        assert exc.value.error_code == ErrorCode.PRECONDITION
        assert exc.value.data["edge"] == "interest Y,X1"
