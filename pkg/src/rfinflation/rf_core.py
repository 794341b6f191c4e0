"""MAE-criterion regression trees with median leaves, and forests of them.

Splits minimise the summed absolute deviation of the two children around
their own medians. Every node draws a fresh random subset of candidate
features. Forests aggregate trees by median (or mean).
"""
from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Sequence

import numpy as np

from . import _kernels
from .data import DataError, DesignMatrix

LEAF = _kernels.LEAF
TIE_TOL = 1e-12
MIN_ROWS = 30
AGGREGATIONS = ("median", "mean")


@dataclass(frozen=True)
class ForestParams:
    n_trees: int = 500
    max_depth: int = 15
    feature_fraction: float = 0.30
    min_leaf: int = 1
    bootstrap: bool = True
    aggregation: str = "median"
    seed: int = 0

    def __post_init__(self):
        if self.n_trees < 1:
            raise ValueError("n_trees must be >= 1")
        if not 0 < self.feature_fraction <= 1:
            raise ValueError("feature_fraction must lie in (0, 1]")
        if self.max_depth < 0:
            raise ValueError("max_depth must be >= 0")
        if self.min_leaf < 1:
            raise ValueError("min_leaf must be >= 1")
        if self.aggregation not in AGGREGATIONS:
            raise ValueError(f"aggregation must be one of {AGGREGATIONS}")

    def n_candidates(self, d: int) -> int:
        # guard against 0.3 * 10 == 3.0000000000000004
        return max(1, min(d, math.ceil(self.feature_fraction * d - 1e-9)))


@dataclass(frozen=True, eq=False)
class SplitDecision:
    feature: int
    threshold: float
    total_mae_after: float
    parent_mae: float
    left: np.ndarray
    right: np.ndarray


def mae(predictions, observed) -> float:
    p = np.asarray(predictions, dtype=float)
    o = np.asarray(observed, dtype=float)
    if p.shape != o.shape:
        raise ValueError(f"length mismatch: {p.shape} vs {o.shape}")
    if p.size == 0:
        raise ValueError("mae of empty input")
    return float(np.mean(np.abs(p - o)))


def best_split(targets, features, candidate_features=None, min_leaf: int = 1):
    """Best (feature, threshold) split of one node, or None.

    ``total_mae_after`` and ``parent_mae`` are sums of absolute deviations
    around the respective medians. Thresholds are midpoints between
    consecutive distinct values; rows with ``x <= threshold`` go left.
    """
    y = np.ascontiguousarray(targets, dtype=float)
    X = np.ascontiguousarray(features, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if y.size < 2:
        raise ValueError("need at least two residents")
    if candidate_features is None:
        candidate_features = range(X.shape[1])
    cand = np.array(sorted(set(int(c) for c in candidate_features)), dtype=np.int64)
    if cand.size == 0:
        raise ValueError("empty candidate feature set")
    rows = np.arange(y.size)
    f, thr, total, parent = _kernels.best_split_rows(
        X, y, rows, 0, y.size, cand, min_leaf, TIE_TOL)
    if f == LEAF:
        return None
    mask = X[:, f] <= thr
    return SplitDecision(int(f), float(thr), float(total), float(parent),
                         np.flatnonzero(mask), np.flatnonzero(~mask))


@dataclass(frozen=True, eq=False)
class Tree:
    """Flat binary tree; node 0 is the root, ``feature == -1`` marks a leaf.

    Leaves hold the median of their resident targets; ``sad`` is the
    absolute-deviation sum of residents around that median.
    """
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    count: np.ndarray
    sad: np.ndarray
    depth: np.ndarray

    @property
    def n_nodes(self) -> int:
        return self.feature.size

    def is_leaf(self, node: int) -> bool:
        return self.feature[node] == LEAF

    def leaf_mae(self, node: int) -> float:
        return float(self.sad[node] / self.count[node])

    @property
    def max_depth(self) -> int:
        return int(self.depth.max())

    def predict(self, X) -> np.ndarray:
        X = np.ascontiguousarray(X, dtype=float)
        return _kernels.predict_tree(self.feature, self.threshold, self.left,
                                     self.right, self.value, X)

    def to_dict(self, node: int = 0) -> dict:
        rec = {"count": int(self.count[node]), "value": float(self.value[node]),
               "sad": float(self.sad[node])}
        if self.feature[node] != LEAF:
            rec["feature"] = int(self.feature[node])
            rec["threshold"] = float(self.threshold[node])
            rec["left"] = self.to_dict(int(self.left[node]))
            rec["right"] = self.to_dict(int(self.right[node]))
        return rec

    @classmethod
    def from_dict(cls, rec: dict) -> "Tree":
        nodes = []

        def walk(r, depth):
            i = len(nodes)
            nodes.append(None)
            if "feature" in r:
                lid = walk(r["left"], depth + 1)
                rid = walk(r["right"], depth + 1)
                nodes[i] = (r["feature"], r["threshold"], lid, rid, r["value"],
                            r["count"], r["sad"], depth)
            else:
                nodes[i] = (LEAF, 0.0, LEAF, LEAF, r["value"], r["count"], r["sad"], depth)
            return i

        walk(rec, 0)
        cols = list(zip(*nodes))
        ints = np.int64
        return cls(np.array(cols[0], ints), np.array(cols[1], float),
                   np.array(cols[2], ints), np.array(cols[3], ints),
                   np.array(cols[4], float), np.array(cols[5], ints),
                   np.array(cols[6], float), np.array(cols[7], ints))

    @classmethod
    def leaf(cls, value: float, count: int = 1, sad: float = 0.0) -> "Tree":
        return cls.from_dict({"value": value, "count": count, "sad": sad})

    @classmethod
    def stump(cls, feature: int, threshold: float, low: float, high: float) -> "Tree":
        return cls.from_dict({"feature": feature, "threshold": threshold, "value": 0.0,
                              "count": 2, "sad": 0.0,
                              "left": {"value": low, "count": 1, "sad": 0.0},
                              "right": {"value": high, "count": 1, "sad": 0.0}})


def fit_tree(design: DesignMatrix, row_indices, params: ForestParams,
             rng: np.random.Generator) -> Tree:
    """Grow one tree on ``design`` rows (duplicates allowed, as from a bootstrap)."""
    rows = np.asarray(row_indices, dtype=np.intp)
    if rows.size == 0:
        raise ValueError("empty in-bag set")
    X = np.ascontiguousarray(design.features[rows], dtype=float)
    y = np.ascontiguousarray(design.target[rows], dtype=float)
    n, d = X.shape
    cap = 2 * n - 1
    if params.max_depth < 62:
        cap = min(cap, 2 ** (params.max_depth + 1) - 1)
    keys = rng.random((cap, max(d, 1)))
    if d == 0:
        depth = 0
    else:
        depth = params.max_depth
    arrays = _kernels.grow_tree(X, y, depth, params.n_candidates(max(d, 1)),
                                params.min_leaf, keys, TIE_TOL)
    return Tree(*arrays)


def predict_tree(tree: Tree, row) -> float:
    row = np.asarray(row, dtype=float)
    if tree.n_nodes > 1 and row.ndim == 1 and row.size <= int(tree.feature.max()):
        raise ValueError("row has too few features for this tree")
    return float(tree.predict(row.reshape(1, -1))[0])


@dataclass(frozen=True, eq=False)
class Forest:
    trees: tuple
    params: ForestParams
    feature_names: tuple
    in_bag: tuple = field(repr=False)

    @property
    def n_features(self) -> int:
        return len(self.feature_names)

    def _check(self, X):
        X = np.ascontiguousarray(X, dtype=float)
        if X.ndim == 1:
            X = X.reshape(1, -1)
        if X.shape[1] != self.n_features:
            raise ValueError(f"expected {self.n_features} features, got {X.shape[1]}")
        return X

    def tree_predictions(self, X) -> np.ndarray:
        X = self._check(X)
        return np.stack([t.predict(X) for t in self.trees])

    def predict(self, X) -> np.ndarray:
        P = self.tree_predictions(X)
        if self.params.aggregation == "median":
            return np.median(P, axis=0)
        return P.mean(axis=0)

    # -- serialization --------------------------------------------------
    def to_dict(self) -> dict:
        return {"params": asdict(self.params),
                "feature_names": list(self.feature_names),
                "trees": [t.to_dict() for t in self.trees],
                "in_bag": [b.tolist() for b in self.in_bag]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_dict(cls, rec: dict) -> "Forest":
        return cls(tuple(Tree.from_dict(t) for t in rec["trees"]),
                   ForestParams(**rec["params"]), tuple(rec["feature_names"]),
                   tuple(np.array(b, dtype=np.intp) for b in rec["in_bag"]))

    @classmethod
    def from_json(cls, text: str) -> "Forest":
        return cls.from_dict(json.loads(text))


def predict_forest(forest: Forest, row) -> float:
    return float(forest.predict(np.asarray(row, dtype=float).reshape(1, -1))[0])


def tree_stream(seed: int, index: int) -> np.random.Generator:
    """Independent generator for tree ``index`` of a forest seeded with ``seed``."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(index)]))


def _fit_one(design, params, i):
    rng = tree_stream(params.seed, i)
    n = design.n_rows
    if params.bootstrap:
        rows = rng.integers(0, n, size=n)
    else:
        rows = np.arange(n)
    return fit_tree(design, rows, params, rng), rows


def fit_forest(design: DesignMatrix, params: ForestParams = ForestParams(),
               n_jobs: int = 1) -> Forest:
    """Fit ``params.n_trees`` trees; output does not depend on ``n_jobs``."""
    if design.n_rows < MIN_ROWS:
        raise DataError(f"need at least {MIN_ROWS} rows to fit a forest, got {design.n_rows}")
    if n_jobs > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            fitted = list(pool.map(lambda i: _fit_one(design, params, i),
                                   range(params.n_trees)))
    else:
        fitted = [_fit_one(design, params, i) for i in range(params.n_trees)]
    return Forest(tuple(t for t, _ in fitted), params, design.feature_names,
                  tuple(r for _, r in fitted))


def forest_from_trees(trees: Sequence[Tree], feature_names, aggregation="median") -> Forest:
    """Assemble a forest from hand-built trees (no in-bag record)."""
    params = ForestParams(n_trees=len(trees), bootstrap=False, aggregation=aggregation)
    return Forest(tuple(trees), params, tuple(feature_names),
                  tuple(np.empty(0, dtype=np.intp) for _ in trees))


def with_seed(params: ForestParams, seed: int) -> ForestParams:
    return replace(params, seed=int(seed))
