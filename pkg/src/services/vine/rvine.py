"""正则 vine (R-vine)
- 逐层最大生成树 (|Kendall tau| 权重，Kruskal) 选择结构
- 每条边经 pair 拟合器拟合，h-函数传递到下一层
- 已有结构可复用 (只重估参数)
"""
import logging
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.cluster.hierarchy import DisjointSet

from core.error_codes import ErrorCode
from core.exceptions import EstimationError
from services.paircop.families import ParametricPair
from services.paircop.grid import DensityGrid
from services.stats.core import kendall_tau

logger = logging.getLogger(__name__)

PairModel = Union[ParametricPair, DensityGrid]
# (边数据 n×2, 模板边或 None) -> 拟合结果
PairFitter = Callable[[np.ndarray, Optional[PairModel]], PairModel]

CLAMP_EPS = 1e-10


def clamp_unit(values: np.ndarray) -> np.ndarray:
    return np.clip(values, CLAMP_EPS, 1.0 - CLAMP_EPS)


@dataclass(frozen=True)
class VineEdge:
    """
    一条 vine 边 c(a, b | D)
    parents 为上一层提供 a、b 条件值的两条边的下标 (第一层为 None)
    """
    tree: int
    conditioned: Tuple[int, int]
    conditioning: Tuple[int, ...]
    parents: Optional[Tuple[int, int]]
    pair: PairModel
    tau: float = 0.0

    @property
    def all_vars(self) -> frozenset:
        return frozenset(self.conditioned) | frozenset(self.conditioning)

    @property
    def label(self) -> str:
        a, b = self.conditioned
        given = ",".join(str(v) for v in self.conditioning)
        return f"{a},{b}|{given}" if given else f"{a},{b}"


@dataclass(frozen=True)
class RVine:
    dim: int
    trees: Tuple[Tuple[VineEdge, ...], ...]

    @property
    def edges(self) -> List[VineEdge]:
        return [edge for tree in self.trees for edge in tree]

    def _pass_through(self, u: np.ndarray) -> Tuple[np.ndarray, List[List[Dict[int, np.ndarray]]]]:
        logdens = np.zeros(u.shape[0])
        h_levels: List[List[Dict[int, np.ndarray]]] = []
        for t, tree in enumerate(self.trees):
            level: List[Dict[int, np.ndarray]] = []
            for edge in tree:
                a, b = edge.conditioned
                if t == 0:
                    x, y = u[:, a], u[:, b]
                else:
                    x = h_levels[t - 1][edge.parents[0]][a]
                    y = h_levels[t - 1][edge.parents[1]][b]
                dens = np.asarray(edge.pair.density(x, y), dtype=float)
                with np.errstate(divide="ignore"):
                    logdens = logdens + np.log(dens)
                level.append({
                    a: clamp_unit(np.asarray(edge.pair.cond_on_second(x, y), dtype=float)),
                    b: clamp_unit(np.asarray(edge.pair.cond_on_first(x, y), dtype=float)),
                })
            h_levels.append(level)
        return logdens, h_levels

    def log_density(self, u) -> np.ndarray:
        u = clamp_unit(np.atleast_2d(np.asarray(u, dtype=float)))
        if u.shape[1] != self.dim:
            raise EstimationError(ErrorCode.INVALID_ARGUMENT, f"vine expects {self.dim} columns, got {u.shape[1]}")
        return self._pass_through(u)[0]

    def density(self, u) -> np.ndarray:
        return np.exp(self.log_density(u))

    def describe(self) -> dict:
        return {
            "dim": self.dim,
            "trees": [
                [
                    {
                        "edge": edge.label,
                        "parents": list(edge.parents) if edge.parents else None,
                        "tau": edge.tau,
                        "pair": edge.pair.describe(),
                    }
                    for edge in tree
                ]
                for tree in self.trees
            ],
        }


def _max_spanning_tree(n_nodes: int, candidates: Sequence[Tuple[float, int, int]]) -> List[Tuple[int, int]]:
    """Kruskal：按权重降序加入边，跳过成环的边"""
    subtrees = DisjointSet(range(n_nodes))
    tree: List[Tuple[int, int]] = []
    for _, i, j in sorted(candidates, key=lambda c: (-c[0], c[1], c[2])):
        if not subtrees.connected(i, j):
            subtrees.merge(i, j)
            tree.append((i, j))
    return tree


def _fit_edge(fitter: PairFitter, x: np.ndarray, y: np.ndarray, template: Optional[PairModel],
              tree: int, label: str) -> PairModel:
    try:
        return fitter(np.column_stack([x, y]), template)
    except EstimationError as exc:
        raise exc.annotate(tree=tree, edge=label) from exc


def fit_rvine(data, fitter: PairFitter, template: Optional[RVine] = None) -> RVine:
    """
    逐层拟合 R-vine

    Args:
        data: n×k 伪观测值
        fitter: 边拟合器
        template: 复用其结构与每条边的选择结果
    """
    u = clamp_unit(np.asarray(data, dtype=float))
    n, k = u.shape
    if template is not None and template.dim != k:
        raise EstimationError(ErrorCode.INVALID_ARGUMENT, "template vine dimension mismatch")

    trees: List[Tuple[VineEdge, ...]] = []
    h_prev: List[Dict[int, np.ndarray]] = []
    prev_edges: List[VineEdge] = []
    for t in range(k - 1):
        if template is not None:
            plan = [(e.conditioned, e.parents, e) for e in template.trees[t]]
        else:
            plan = _plan_tree(t, u, prev_edges, h_prev)
        edges: List[VineEdge] = []
        h_level: List[Dict[int, np.ndarray]] = []
        for (a, b), parents, tmpl in plan:
            if t == 0:
                x, y = u[:, a], u[:, b]
                conditioning: Tuple[int, ...] = ()
            else:
                x, y = h_prev[parents[0]][a], h_prev[parents[1]][b]
                conditioning = tuple(sorted(prev_edges[parents[0]].all_vars & prev_edges[parents[1]].all_vars))
            label = f"{a},{b}|{','.join(map(str, conditioning))}" if conditioning else f"{a},{b}"
            pair = _fit_edge(fitter, x, y, tmpl.pair if tmpl is not None else None, t, label)
            edges.append(VineEdge(tree=t, conditioned=(a, b), conditioning=conditioning,
                                  parents=parents, pair=pair, tau=kendall_tau(x, y)))
            h_level.append({
                a: clamp_unit(np.asarray(pair.cond_on_second(x, y), dtype=float)),
                b: clamp_unit(np.asarray(pair.cond_on_first(x, y), dtype=float)),
            })
        trees.append(tuple(edges))
        prev_edges, h_prev = edges, h_level
    vine = RVine(dim=k, trees=tuple(trees))
    logger.debug(f"Fitted R-vine over {k} variables, {n} rows: {[e.label for e in vine.edges]}")
    return vine


def _plan_tree(t: int, u: np.ndarray, prev_edges: List[VineEdge], h_prev: List[Dict[int, np.ndarray]]):
    """候选边 + |tau| 权重的最大生成树"""
    candidates: List[Tuple[float, int, int]] = []
    info: Dict[Tuple[int, int], Tuple[int, int]] = {}
    if t == 0:
        k = u.shape[1]
        for i in range(k):
            for j in range(i + 1, k):
                candidates.append((abs(kendall_tau(u[:, i], u[:, j])), i, j))
                info[(i, j)] = (i, j)
        n_nodes = k
    else:
        n_nodes = len(prev_edges)
        for i in range(n_nodes):
            for j in range(i + 1, n_nodes):
                vi, vj = prev_edges[i].all_vars, prev_edges[j].all_vars
                shared = vi & vj
                if len(shared) != len(vi) - 1:
                    continue
                (a,) = tuple(vi - shared)
                (b,) = tuple(vj - shared)
                if a not in h_prev[i] or b not in h_prev[j]:
                    continue
                candidates.append((abs(kendall_tau(h_prev[i][a], h_prev[j][b])), i, j))
                info[(i, j)] = (a, b)
    plan = []
    for i, j in _max_spanning_tree(n_nodes, candidates):
        a, b = info[(i, j)]
        plan.append(((a, b), None if t == 0 else (i, j), None))
    return plan


def validate_structure(vine: RVine) -> List[str]:
    """检查每层边数、树性与邻近条件，返回问题列表 (空表示合法)"""
    problems: List[str] = []
    k = vine.dim
    if len(vine.trees) != max(k - 1, 0):
        problems.append(f"expected {k - 1} trees, found {len(vine.trees)}")
    for t, tree in enumerate(vine.trees):
        if len(tree) != k - 1 - t:
            problems.append(f"tree {t}: expected {k - 1 - t} edges, found {len(tree)}")
        n_nodes = k if t == 0 else len(vine.trees[t - 1])
        subtrees = DisjointSet(range(n_nodes))
        for edge in tree:
            i, j = edge.conditioned if t == 0 else (edge.parents or (-1, -1))
            if not (0 <= i < n_nodes and 0 <= j < n_nodes):
                problems.append(f"tree {t}: edge {edge.label} references missing nodes")
                continue
            if subtrees.connected(i, j):
                problems.append(f"tree {t}: edge {edge.label} closes a cycle")
            subtrees.merge(i, j)
            if t > 0:
                left, right = vine.trees[t - 1][i].all_vars, vine.trees[t - 1][j].all_vars
                if len(left & right) != len(left) - 1:
                    problems.append(f"tree {t}: edge {edge.label} violates the proximity condition")
                elif frozenset(edge.conditioning) != left & right:
                    problems.append(f"tree {t}: edge {edge.label} has an inconsistent conditioning set")
        if tree and subtrees.n_subsets != 1:
            problems.append(f"tree {t}: edges do not span all nodes")
    return problems
