"""工具函数"""
import json
import math
from typing import Any, Dict, List

import numpy as np

# --- 随机数 ---

def spawn_seeds(seed: int, count: int) -> List[np.random.SeedSequence]:
    """
    从主种子派生 count 个独立子种子
    子种子按索引确定，与调度顺序无关
    """
    return np.random.SeedSequence(seed).spawn(count)

# --- 序列化 ---

def to_jsonable(value: Any) -> Any:
    """将 numpy 标量/数组递归转换为 JSON 可序列化对象"""
    if isinstance(value, dict):
        return {str(k): to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return to_jsonable(value.tolist())
    if isinstance(value, np.generic):
        return to_jsonable(value.item())
    if isinstance(value, float) and not math.isfinite(value):
        return str(value)
    return value


def dump_json(data: Dict[str, Any], path: str) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(to_jsonable(data), f, indent=2, ensure_ascii=False, sort_keys=True)
