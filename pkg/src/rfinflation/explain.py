"""Impurity importance and partial dependence for fitted forests."""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .data import DataError, DesignMatrix
from .rf_core import LEAF, Forest

DEFAULT_GRID_POINTS = 50
_PREDICT_CHUNK = 200_000


@dataclass(frozen=True, eq=False)
class ImportanceReport:
    feature_names: tuple
    shares: np.ndarray          # normalised, sums to 1 when any split exists
    raw: np.ndarray             # mean per-tree MAE-sum reduction

    def ranked(self) -> list[tuple[str, float]]:
        order = sorted(range(len(self.shares)), key=lambda i: (-self.shares[i], i))
        return [(self.feature_names[i], float(self.shares[i])) for i in order]

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["feature", "share"])
            for name, share in self.ranked():
                w.writerow([name, repr(share)])


def _check_names(forest: Forest, design: DesignMatrix):
    if tuple(forest.feature_names) != tuple(design.feature_names):
        raise DataError("forest and design feature names differ")


def impurity_importance(forest: Forest, design: DesignMatrix) -> ImportanceReport:
    """Credit each split's drop in absolute-deviation sum to its feature.

    Node sums are recomputed by routing each tree's in-bag rows (with
    bootstrap multiplicity) through it; credits are averaged over trees and
    normalised to shares.
    """
    _check_names(forest, design)
    d = design.n_features
    total = np.zeros(d)
    for tree, rows in zip(forest.trees, forest.in_bag):
        if rows.size == 0:
            # hand-assembled tree without an in-bag record: use the fit-time sums
            sad, counts = tree.sad, tree.count
        else:
            X = np.ascontiguousarray(design.features[rows])
            y = np.ascontiguousarray(design.target[rows])
            sad, counts = _kernels.resident_sads(tree.feature, tree.threshold, tree.left,
                                                 tree.right, X, y)
        for node in np.flatnonzero(tree.feature != LEAF):
            gain = sad[node] - sad[tree.left[node]] - sad[tree.right[node]]
            total[tree.feature[node]] += max(gain, 0.0)
    raw = total / len(forest.trees)
    s = raw.sum()
    shares = raw / s if s > 0 else np.zeros(d)
    return ImportanceReport(tuple(design.feature_names), shares, raw)


@dataclass(frozen=True, eq=False)
class PdpGrid:
    features: tuple             # one or two feature names
    grids: tuple                # one grid array per feature
    response: np.ndarray        # shape (len(grid_a),) or (len(grid_a), len(grid_b))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            if len(self.features) == 1:
                w.writerow([self.features[0], "response"])
                for v, r in zip(self.grids[0], self.response):
                    w.writerow([repr(float(v)), repr(float(r))])
            else:
                w.writerow([*self.features, "response"])
                for i, a in enumerate(self.grids[0]):
                    for j, b in enumerate(self.grids[1]):
                        w.writerow([repr(float(a)), repr(float(b)),
                                    repr(float(self.response[i, j]))])


def quantile_grid(values, n: int = DEFAULT_GRID_POINTS) -> np.ndarray:
    """``n`` equally spaced empirical quantiles, duplicates removed."""
    return np.unique(np.quantile(np.asarray(values, dtype=float), np.linspace(0, 1, n)))


def _grid(design, j, grid):
    if grid is None:
        grid = DEFAULT_GRID_POINTS
    if np.isscalar(grid):
        g = quantile_grid(design.features[:, j], int(grid))
    else:
        g = np.asarray(grid, dtype=float)
    if g.size == 0:
        raise ValueError("empty grid")
    if np.any(np.diff(g) <= 0):
        raise ValueError("grid values must be strictly increasing")
    return g


def _mean_response(forest, X, columns, assignments):
    """Mean prediction over rows of X for each row of ``assignments``."""
    n = X.shape[0]
    per_batch = max(1, _PREDICT_CHUNK // max(n, 1))
    out = np.empty(len(assignments))
    for start in range(0, len(assignments), per_batch):
        batch = assignments[start:start + per_batch]
        big = np.tile(X, (len(batch), 1))
        for c, col in enumerate(columns):
            big[:, col] = np.repeat(batch[:, c], n)
        preds = forest.predict(big).reshape(len(batch), n)
        # averaging offsets from the first row keeps a constant response exact
        ref = preds[:, :1]
        out[start:start + len(batch)] = ref[:, 0] + (preds - ref).mean(axis=1)
    return out


def pdp_1d(forest: Forest, design: DesignMatrix, feature: str, grid=None) -> PdpGrid:
    """Average forest response with ``feature`` overwritten by each grid value.

    ``grid`` is an explicit increasing array or a quantile count (default 50).
    """
    _check_names(forest, design)
    j = design.feature_index(design.resolve(feature))
    g = _grid(design, j, grid)
    resp = _mean_response(forest, design.features, [j], g.reshape(-1, 1))
    return PdpGrid((design.feature_names[j],), (g,), resp)


def pdp_2d(forest: Forest, design: DesignMatrix, feature_a: str, feature_b: str,
           grids=(None, None)) -> PdpGrid:
    """Joint partial dependence; ``response[i, j]`` is at (grid_a[i], grid_b[j])."""
    _check_names(forest, design)
    a = design.feature_index(design.resolve(feature_a))
    b = design.feature_index(design.resolve(feature_b))
    if a == b:
        raise ValueError("pdp_2d needs two different features")
    ga, gb = _grid(design, a, grids[0]), _grid(design, b, grids[1])
    pairs = np.array([(x, y) for x in ga for y in gb])
    resp = _mean_response(forest, design.features, [a, b], pairs)
    return PdpGrid((design.feature_names[a], design.feature_names[b]), (ga, gb),
                   resp.reshape(ga.size, gb.size))


def largest_slope_increase(pdp: PdpGrid) -> float:
    """Grid value where the 1-D response slope rises the most (the convex kink)."""
    if len(pdp.features) != 1:
        raise ValueError("needs a 1-D partial dependence")
    g, r = pdp.grids[0], pdp.response
    if g.size < 3:
        raise ValueError("need at least three grid points")
    slopes = np.diff(r) / np.diff(g)
    return float(g[1 + int(np.argmax(np.diff(slopes)))])


def split_thresholds(forest: Forest, feature: int) -> np.ndarray:
    """All thresholds the forest uses on one feature."""
    vals = [t.threshold[t.feature == feature] for t in forest.trees]
    return np.unique(np.concatenate(vals)) if vals else np.empty(0)
