"""数据文件读写
样本 CSV：表头 y,delta,x1,...,xd；评估点 CSV：表头 x1,...,xd
出错时报告文件中的行号 (表头为第 1 行)
"""
import logging
import os
from typing import List

import numpy as np
import pandas as pd

from core.error_codes import ErrorCode
from core.exceptions import EstimationError
from services.survival.sample import ObservedSample

logger = logging.getLogger(__name__)


def covariate_columns(d: int) -> List[str]:
    return [f"x{j + 1}" for j in range(d)]


def _read_frame(path: str) -> pd.DataFrame:
    try:
        return pd.read_csv(path, dtype=str, keep_default_na=False, encoding="utf-8")
    except FileNotFoundError as exc:
        raise EstimationError(ErrorCode.MALFORMED_INPUT, f"{path}: file not found") from exc
    except pd.errors.EmptyDataError as exc:
        raise EstimationError(ErrorCode.MALFORMED_INPUT, f"{path}: file is empty") from exc
    except (pd.errors.ParserError, UnicodeDecodeError) as exc:
        raise EstimationError(ErrorCode.MALFORMED_INPUT, f"{path}: {exc}") from exc


def _parse_float(text: str) -> float:
    try:
        return float(text)
    except ValueError:
        return np.nan


def _numeric(frame: pd.DataFrame, path: str) -> np.ndarray:
    """逐单元格转为浮点数 (float() 按最近舍入解析 %.17g)，第一处非数值单元格报告行号"""
    values = np.vectorize(_parse_float, otypes=[float])(frame.to_numpy(dtype=object)).reshape(frame.shape)
    bad = ~np.isfinite(values)
    if bad.any():
        row = int(np.flatnonzero(bad.any(axis=1))[0])
        col = int(np.flatnonzero(bad[row])[0])
        column = str(frame.columns[col]).strip()
        raise EstimationError(
            ErrorCode.MALFORMED_INPUT,
            f"{path}: line {row + 2}: column '{column}' is not a finite number: {frame.iloc[row, col]!r}",
            data={"line": row + 2, "column": column},
        )
    return values


def read_sample_csv(path: str) -> ObservedSample:
    """
    读取 y,delta,x1..xd 格式的样本

    Raises:
        EstimationError: 表头不符、非数值单元格或 delta ∉ {0,1} (MALFORMED_INPUT)
    """
    frame = _read_frame(path)
    columns = [c.strip() for c in frame.columns]
    d = len(columns) - 2
    if d < 1 or columns != ["y", "delta"] + covariate_columns(d):
        raise EstimationError(
            ErrorCode.MALFORMED_INPUT,
            f"{path}: line 1: header must be y,delta,x1,...,xd, got {','.join(columns)}",
            data={"line": 1},
        )
    if frame.empty:
        raise EstimationError(ErrorCode.MALFORMED_INPUT, f"{path}: no data rows")
    values = _numeric(frame, path)
    delta = values[:, 1]
    invalid = np.flatnonzero((delta != 0.0) & (delta != 1.0))
    if invalid.size:
        row = int(invalid[0])
        raise EstimationError(
            ErrorCode.MALFORMED_INPUT,
            f"{path}: line {row + 2}: delta must be 0 or 1, got {frame.iloc[row, 1]!r}",
            data={"line": row + 2, "column": "delta"},
        )
    logger.info(f"Read {values.shape[0]} rows with {d} covariates from {path}")
    return ObservedSample(y=values[:, 0], delta=delta.astype(bool), x=values[:, 2:])


def read_points_csv(path: str, d: int) -> np.ndarray:
    frame = _read_frame(path)
    columns = [c.strip() for c in frame.columns]
    if columns != covariate_columns(d):
        raise EstimationError(
            ErrorCode.MALFORMED_INPUT,
            f"{path}: line 1: header must be {','.join(covariate_columns(d))}",
            data={"line": 1},
        )
    return _numeric(frame, path)


def sample_frame(sample: ObservedSample) -> pd.DataFrame:
    frame = pd.DataFrame(sample.x, columns=covariate_columns(sample.d))
    frame.insert(0, "delta", sample.delta.astype(int))
    frame.insert(0, "y", sample.y)
    return frame


def write_sample_csv(sample: ObservedSample, path: str) -> str:
    """写出可被 read_sample_csv 读回的样本 (17 位有效数字，保证往返一致)"""
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    sample_frame(sample).to_csv(path, index=False, float_format="%.17g", lineterminator="\n")
    return path
