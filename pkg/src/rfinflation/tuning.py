"""k-fold cross-validated grid search over forest hyperparameters."""
from __future__ import annotations

import csv
import itertools
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .data import DataError, DesignMatrix, kfold_partition
from .rf_core import TIE_TOL, ForestParams, fit_forest, mae


@dataclass(frozen=True)
class TuneGrid:
    n_trees: tuple = (100, 300, 500)
    max_depth: tuple = (5, 10, 15, 20)
    feature_fraction: tuple = (0.3,)
    min_leaf: tuple = (1, 5)
    k: int = 10
    seed: int = 0
    base: ForestParams = field(default_factory=ForestParams)

    def __post_init__(self):
        for name in ("n_trees", "max_depth", "feature_fraction", "min_leaf"):
            if len(getattr(self, name)) == 0:
                raise ValueError(f"empty candidate set for {name}")
        if self.k < 2:
            raise ValueError("k must be >= 2")

    def configurations(self) -> list[ForestParams]:
        return [replace(self.base, n_trees=t, max_depth=md, feature_fraction=ff,
                        min_leaf=ml, seed=self.seed)
                for t, md, ff, ml in itertools.product(
                    self.n_trees, self.max_depth, self.feature_fraction, self.min_leaf)]


@dataclass(frozen=True)
class TuneRow:
    params: ForestParams
    fold_maes: tuple

    @property
    def mean_mae(self) -> float:
        return float(np.mean(self.fold_maes))


@dataclass(frozen=True)
class TuneReport:
    rows: tuple
    best: ForestParams
    folds: tuple = field(repr=False)

    def to_dict(self) -> dict:
        return {"best": asdict(self.best),
                "configurations": [{"params": asdict(r.params), "mean_mae": r.mean_mae,
                                    "fold_maes": list(r.fold_maes)} for r in self.rows]}

    def to_json(self, path=None) -> str:
        text = json.dumps(self.to_dict(), indent=2, sort_keys=True)
        if path is not None:
            with open(path, "w", encoding="utf-8") as fh:
                fh.write(text + "\n")
        return text

    def to_csv(self, path) -> None:
        k = len(self.folds)
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["n_trees", "max_depth", "feature_fraction", "min_leaf",
                        "mean_mae", *[f"fold_{i}" for i in range(k)]])
            for r in self.rows:
                p = r.params
                w.writerow([p.n_trees, p.max_depth, p.feature_fraction, p.min_leaf,
                            repr(r.mean_mae), *map(repr, r.fold_maes)])


def cv_score(design: DesignMatrix, params: ForestParams, folds) -> tuple:
    n = design.n_rows
    out = []
    for held in folds:
        mask = np.ones(n, dtype=bool)
        mask[held] = False
        forest = fit_forest(design.subset(np.flatnonzero(mask)), params)
        out.append(mae(forest.predict(design.features[held]), design.target[held]))
    return tuple(out)


def _select(rows) -> ForestParams:
    best_mae = min(r.mean_mae for r in rows)
    tied = [r for r in rows if r.mean_mae - best_mae <= TIE_TOL]
    tied.sort(key=lambda r: (r.params.n_trees, r.params.max_depth))
    return tied[0].params


def grid_search(design: DesignMatrix, grid: TuneGrid = TuneGrid(), n_jobs: int = 1) -> TuneReport:
    """Score every configuration on one shared fold partition; pick the lowest mean MAE.

    Ties go to fewer trees, then shallower depth.
    """
    configs = grid.configurations()
    if not configs:
        raise ValueError("empty grid")
    if design.n_rows < grid.k:
        raise DataError(f"{design.n_rows} rows cannot form {grid.k} folds")
    folds = kfold_partition(design.n_rows, grid.k, grid.seed)
    if n_jobs > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            scores = list(pool.map(lambda p: cv_score(design, p, folds), configs))
    else:
        scores = [cv_score(design, p, folds) for p in configs]
    rows = tuple(TuneRow(p, s) for p, s in zip(configs, scores))
    return TuneReport(rows, _select(rows), tuple(folds))
