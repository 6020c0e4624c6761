"""copula 条件分位数回归命令行
- simulate：Monte-Carlo 实验，输出汇总表、逐重复明细与 JSON sidecar
- fit / predict：在用户数据 (y,delta,x1..xd) 上拟合与预测
- pe：留一交叉验证预测误差 (×10)
- dette-demo：非单调回归示例的曲线数据
所有写出的文件路径打印到标准输出，日志与表格输出到标准错误
"""
import logging
import os
from typing import Any, Dict, List, Optional

import numpy as np
import pandas as pd
import typer
from rich.console import Console
from rich.table import Table

from core.config import Settings, load_settings
from core.error_codes import ErrorCode
from core.exception_handler import handle_cli_errors
from core.exceptions import EstimationError
from core.logger import setup_logging
from models.schemas import (
    CensoringKind,
    CopulaMode,
    DgpSpec,
    DgpTag,
    EstimatorConfig,
    EstimatorSpec,
    ExperimentConfig,
    RunConfig,
    validate_taus,
)
from services.cqr.cv import cv_prediction_errors
from services.cqr.estimator import QuantileEstimator, fit_estimator, predict_curve
from services.paircop.grid import DensityGrid, save_grid
from services.simlab.datafile import covariate_columns, read_points_csv, read_sample_csv, write_sample_csv
from services.simlab.demo import curve_mse, dette_curves
from services.simlab.engine import build_fitter, replication_data, run_experiment
from services.simlab.report import summary_table, write_experiment, write_sidecar, write_table

logger = logging.getLogger(__name__)

app = typer.Typer(help="Copula-based conditional quantile regression for censored data", no_args_is_help=True,
                  add_completion=False)
console = Console(stderr=True)

PE_SCALE = 10.0
PE_TAUS = [0.1, 0.3, 0.5, 0.7]
CURVE_TAUS = [round(0.05 * k, 2) for k in range(1, 20)]


# --- 参数处理 ---

def _taus_callback(value: List[float]) -> List[float]:
    try:
        return validate_taus(sorted(value))
    except ValueError as exc:
        raise typer.BadParameter(str(exc)) from exc


def _families(value: Optional[str]) -> List[str]:
    return [item.strip() for item in value.split(",") if item.strip()] if value else []


def _load(config_file: Optional[str], families: List[str], workers: Optional[int],
          fold_seed: Optional[int] = None) -> Settings:
    """--config 文件 < 命令行参数；同时初始化日志"""
    if config_file and not os.path.exists(config_file):
        raise EstimationError(ErrorCode.CONFIG_ERROR, f"config file not found: {config_file}")
    config = load_settings(
        config_file,
        paircop_families=families or None,
        cqr_workers=workers,
        simlab_workers=workers,
        smoother_fold_seed=fold_seed,
    )
    setup_logging(config)
    return config


def _estimators(tokens: Optional[List[str]], modes: List[CopulaMode], censoring_model: CensoringKind) -> List[EstimatorSpec]:
    tokens = tokens or [f"{mode.value}:{censoring_model.value}" for mode in modes]
    try:
        return [EstimatorSpec.parse(token) for token in tokens]
    except ValueError as exc:
        raise EstimationError(ErrorCode.INVALID_ARGUMENT, str(exc)) from exc


def _echo(run: RunConfig, config: Settings) -> Dict[str, Any]:
    return {"run": run.model_dump(mode="json"), "settings": config.model_dump(mode="json")}


def _print_paths(paths: List[str]) -> None:
    for path in paths:
        typer.echo(path)


def _print_frame(frame: pd.DataFrame, title: str) -> None:
    table = Table(title=title)
    for column in frame.columns:
        table.add_column(str(column))
    for row in frame.itertuples(index=False):
        table.add_row(*[f"{v:.6g}" if isinstance(v, float) else str(v) for v in row])
    console.print(table)


def _fit(input_path: str, mode: CopulaMode, censoring_model: CensoringKind, config: Settings) -> QuantileEstimator:
    sample = read_sample_csv(input_path)
    return fit_estimator(sample, config=EstimatorConfig.from_settings(config, mode, censoring_model))


# --- 命令 ---

@app.command()
@handle_cli_errors
def simulate(
    dgp: DgpTag = typer.Option(..., "--dgp", help="数据生成过程"),
    n: int = typer.Option(200, "--n", min=1, help="样本量"),
    censoring: float = typer.Option(0.0, "--censoring", help="平均删失比例 0 / 0.3 / 0.5"),
    tau: List[float] = typer.Option([0.3], "--tau", callback=_taus_callback, help="分位数水平 (可重复)"),
    mode: List[CopulaMode] = typer.Option([CopulaMode.SP], "--mode", help="copula 策略 (可重复)"),
    censoring_model: CensoringKind = typer.Option(CensoringKind.KM, "--censoring-model"),
    estimator: Optional[List[str]] = typer.Option(None, "--estimator", help="MODE:CENSORING、cox-ref 或 unconditional"),
    replications: int = typer.Option(100, "--B", min=1, help="重复次数"),
    seed: int = typer.Option(..., "--seed", help="主种子"),
    out: str = typer.Option("out", "--out", help="输出目录"),
    families: Optional[str] = typer.Option(None, "--families", help="候选族，逗号分隔"),
    workers: Optional[int] = typer.Option(None, "--workers", min=1),
    config_file: Optional[str] = typer.Option(None, "--config"),
    export_data: Optional[str] = typer.Option(None, "--export-data", help="导出第一次重复的数据到 CSV"),
):
    """运行 Monte-Carlo 实验"""
    config = _load(config_file, _families(families), workers)
    specs = _estimators(estimator, mode, censoring_model)
    run = RunConfig(
        subcommand="simulate", dgp=dgp, n=n, censoring=censoring, taus=tau,
        estimators=[s.label for s in specs], B=replications, seed=seed, out=out,
        families=_families(families), workers=config.simlab_workers,
        export_data=export_data, config_file=config_file,
    )
    experiment = ExperimentConfig(
        dgp=DgpSpec(tag=dgp, n=n, censoring_level=censoring),
        taus=tau,
        estimators=specs,
        B=replications,
        seed=seed,
        n_eval=config.simlab_n_eval,
        workers=config.simlab_workers,
        max_excluded_fraction=config.simlab_max_excluded_fraction,
        base=EstimatorConfig.from_settings(config),
    )
    result = run_experiment(experiment)
    stem = os.path.join(out, f"simulate_{dgp.value}_n{n}_c{round(censoring * 100)}")
    paths = write_experiment([result], stem, _echo(run, config))
    if export_data:
        paths.append(write_sample_csv(replication_data(experiment, 0).sample, export_data))
    _print_paths(paths)
    _print_frame(summary_table([result]), f"DGP {dgp.value}, n={n}, censoring={censoring}")
    result.raise_if_invalid()


@app.command()
@handle_cli_errors
def fit(
    input_path: str = typer.Option(..., "--input", help="y,delta,x1..xd 格式的 CSV"),
    mode: CopulaMode = typer.Option(CopulaMode.SP, "--mode"),
    censoring_model: CensoringKind = typer.Option(CensoringKind.KM, "--censoring-model"),
    out: str = typer.Option("out", "--out"),
    families: Optional[str] = typer.Option(None, "--families"),
    seed: Optional[int] = typer.Option(None, "--seed", help="带宽选择种子 (覆盖 smoother.fold_seed)"),
    config_file: Optional[str] = typer.Option(None, "--config"),
):
    """拟合估计器，输出结构描述与非参数网格"""
    config = _load(config_file, _families(families), None, seed)
    run = RunConfig(subcommand="fit", input=input_path, estimators=[f"{mode.value}:{censoring_model.value}"],
                    seed=config.smoother_fold_seed, out=out, families=_families(families), config_file=config_file)
    estimator = _fit(input_path, mode, censoring_model, config)
    paths = [write_sidecar(os.path.join(out, "fit.json"), {"config": _echo(run, config), "model": estimator.describe()})]
    for j, pair in enumerate(estimator.vine.interest_pairs):
        if isinstance(pair, DensityGrid):
            path = os.path.join(out, f"grid_y_x{j + 1}.txt")
            save_grid(pair, path)
            paths.append(path)
    _print_paths(paths)
    console.print(f"fitted {estimator.config.label} on n={estimator.sample.n} (events {estimator.sample.n_events})")


@app.command()
@handle_cli_errors
def predict(
    input_path: str = typer.Option(..., "--input", help="y,delta,x1..xd 格式的 CSV"),
    points: Optional[str] = typer.Option(None, "--points", help="x1..xd 格式的预测点 CSV，缺省为输入数据的协变量"),
    tau: List[float] = typer.Option([0.3], "--tau", callback=_taus_callback),
    curve: bool = typer.Option(False, "--curve", help="同时输出 τ ∈ {0.05,…,0.95} 的分位数曲线"),
    mode: CopulaMode = typer.Option(CopulaMode.SP, "--mode"),
    censoring_model: CensoringKind = typer.Option(CensoringKind.KM, "--censoring-model"),
    out: str = typer.Option("out", "--out"),
    families: Optional[str] = typer.Option(None, "--families"),
    seed: Optional[int] = typer.Option(None, "--seed", help="带宽选择种子 (覆盖 smoother.fold_seed)"),
    config_file: Optional[str] = typer.Option(None, "--config"),
):
    """拟合并在给定点预测条件分位数"""
    config = _load(config_file, _families(families), None, seed)
    run = RunConfig(subcommand="predict", input=input_path, points=points, taus=tau, curve=curve,
                    estimators=[f"{mode.value}:{censoring_model.value}"], seed=config.smoother_fold_seed, out=out,
                    families=_families(families), config_file=config_file)
    estimator = _fit(input_path, mode, censoring_model, config)
    x_points = read_points_csv(points, estimator.d) if points else estimator.sample.x

    paths = [write_table(_prediction_frame(estimator, x_points, tau), os.path.join(out, "predictions.csv"))]
    if curve:
        curves = _prediction_frame(estimator, x_points, CURVE_TAUS)
        paths.append(write_table(curves, os.path.join(out, "curves.csv")))
    paths.append(write_sidecar(os.path.join(out, "predict.json"), {"config": _echo(run, config)}))
    _print_paths(paths)


def _prediction_frame(estimator: QuantileEstimator, x_points: np.ndarray, taus: List[float]) -> pd.DataFrame:
    rows = []
    for i, x in enumerate(x_points):
        result = predict_curve(estimator, x, taus)
        if not result.is_monotone():
            logger.warning(f"Quantile curve at point {i} is not monotone")
        for tau_value, estimate in zip(result.taus, result.values):
            rows.append({"point": i, **dict(zip(covariate_columns(estimator.d), x)), "tau": tau_value,
                         "estimate": estimate})
    return pd.DataFrame(rows, columns=["point", *covariate_columns(estimator.d), "tau", "estimate"])


@app.command()
@handle_cli_errors
def pe(
    input_path: str = typer.Option(..., "--input", help="y,delta,x1..xd 格式的 CSV"),
    tau: List[float] = typer.Option(PE_TAUS, "--tau", callback=_taus_callback),
    mode: List[CopulaMode] = typer.Option([CopulaMode.SP], "--mode"),
    censoring_model: CensoringKind = typer.Option(CensoringKind.KM, "--censoring-model"),
    estimator: Optional[List[str]] = typer.Option(None, "--estimator", help="MODE:CENSORING、cox-ref 或 unconditional"),
    out: str = typer.Option("out", "--out"),
    families: Optional[str] = typer.Option(None, "--families"),
    workers: Optional[int] = typer.Option(None, "--workers", min=1),
    seed: Optional[int] = typer.Option(None, "--seed", help="带宽选择种子 (覆盖 smoother.fold_seed)"),
    config_file: Optional[str] = typer.Option(None, "--config"),
):
    """留一交叉验证预测误差 (×10)"""
    config = _load(config_file, _families(families), workers, seed)
    specs = _estimators(estimator, mode, censoring_model)
    run = RunConfig(subcommand="pe", input=input_path, taus=tau, estimators=[s.label for s in specs],
                    seed=config.smoother_fold_seed, out=out, families=_families(families), workers=config.cqr_workers,
                    config_file=config_file)
    sample = read_sample_csv(input_path)
    base = EstimatorConfig.from_settings(config)
    frame = pd.DataFrame({"tau": tau})
    for spec in specs:
        errors = cv_prediction_errors(sample, tau, build_fitter(spec, base), workers=config.cqr_workers)
        frame[spec.label] = [errors[t] * PE_SCALE for t in tau]
    paths = [write_table(frame, os.path.join(out, "pe.csv")),
             write_sidecar(os.path.join(out, "pe.json"), {"config": _echo(run, config)})]
    _print_paths(paths)
    _print_frame(frame, "Prediction error ×10")


@app.command("dette-demo")
@handle_cli_errors
def dette_demo(
    seed: int = typer.Option(..., "--seed"),
    n: int = typer.Option(500, "--n", min=1),
    tau: List[float] = typer.Option([0.5], "--tau", callback=_taus_callback),
    out: str = typer.Option("out", "--out"),
    config_file: Optional[str] = typer.Option(None, "--config"),
):
    """非单调回归示例：参数化与非参数 copula 拟合曲线"""
    config = _load(config_file, [], None)
    if len(tau) != 1:
        raise EstimationError(ErrorCode.INVALID_ARGUMENT, "dette-demo takes a single --tau")
    run = RunConfig(subcommand="dette-demo", dgp=DgpTag.DETTE, n=n, taus=tau, seed=seed, out=out,
                    estimators=["P:none", "NP:none"], config_file=config_file)
    frame = dette_curves(seed, EstimatorConfig.from_settings(config), n=n, tau=tau[0])
    paths = [write_table(frame, os.path.join(out, "dette_demo.csv")),
             write_sidecar(os.path.join(out, "dette_demo.json"), {
                 "config": _echo(run, config),
                 "mse": {"parametric": curve_mse(frame, "parametric"),
                         "nonparametric": curve_mse(frame, "nonparametric")},
             })]
    _print_paths(paths)


if __name__ == "__main__":
    app()
