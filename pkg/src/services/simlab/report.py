"""实验结果输出
- 汇总表：每个 (DGP, n, 删失, τ) 一行，每个估计器三列 (IMSE×1000, IMAE, 离散度)
- 逐重复明细表：可据此重算所有汇总指标
- JSON sidecar：种子、配置回显、剔除列表、运行时间
CSV 统一 6 位有效数字
"""
import logging
import os
from typing import Any, Dict, List, Sequence

import pandas as pd

from core.utils import dump_json
from services.simlab.engine import ExperimentResult

logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.6g"
METRIC_COLUMNS = ("imse_x1000", "imae", "dispersion")


def summary_table(results: Sequence[ExperimentResult]) -> pd.DataFrame:
    rows: List[Dict[str, Any]] = []
    for result in results:
        config = result.config
        for tau in config.taus:
            row: Dict[str, Any] = {
                "dgp": config.dgp.tag.value,
                "n": config.dgp.n,
                "censoring": config.dgp.censoring_level,
                "tau": tau,
                "B": config.B,
                "excluded": len(result.excluded),
            }
            for spec in config.estimators:
                metrics = result.metrics(spec.label, tau) if result.included else {}
                for name in METRIC_COLUMNS:
                    row[f"{spec.label} {name}"] = metrics.get(name, float("nan"))
            rows.append(row)
    return pd.DataFrame(rows)


def replications_table(result: ExperimentResult) -> pd.DataFrame:
    """长表：replication, estimator, tau, point, estimate, truth"""
    rows: List[Dict[str, Any]] = []
    for label, by_tau in result.estimates.items():
        for tau, values in by_tau.items():
            truths = result.truths[tau]
            for row_index, replication in enumerate(result.included):
                for point in range(values.shape[1]):
                    rows.append({
                        "replication": replication,
                        "estimator": label,
                        "tau": tau,
                        "point": point,
                        "estimate": values[row_index, point],
                        "truth": truths[point],
                    })
    columns = ["replication", "estimator", "tau", "point", "estimate", "truth"]
    return pd.DataFrame(rows, columns=columns)


def write_table(frame: pd.DataFrame, path: str) -> str:
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    logger.info(f"Wrote {len(frame)} rows to {path}")
    return path


def write_sidecar(path: str, payload: Dict[str, Any]) -> str:
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    dump_json(payload, path)
    return path


def write_experiment(results: Sequence[ExperimentResult], stem: str, config_echo: Dict[str, Any]) -> List[str]:
    """写出汇总表、逐重复明细与 sidecar，返回所有文件路径"""
    paths = [write_table(summary_table(results), f"{stem}.csv")]
    details = [replications_table(result) for result in results]
    paths.append(write_table(pd.concat(details, ignore_index=True) if details else pd.DataFrame(),
                             f"{stem}_replications.csv"))
    paths.append(write_sidecar(f"{stem}.json", {
        "config": config_echo,
        "experiments": [result.metadata() for result in results],
    }))
    return paths
