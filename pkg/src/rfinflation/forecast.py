"""Evaluation protocols: resampled 80/20 fits, rolling one-step backtests and
the cross-model comparison table."""
from __future__ import annotations

import csv
import itertools
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Mapping

import numpy as np

from .baselines import arma_forecast_1step, cv_lambda, fit_linear, select_arma
from .data import (DataError, DesignMatrix, PipelineConfig, SeriesFrame, apply_transforms,
                   build_design, derive_seed, design_row, format_month, train_test_split)
from .rf_core import MIN_ROWS, ForestParams, fit_forest, mae, with_seed

MODELS = ("random_forest", "arma", "lasso", "ridge", "external_consensus")
EXCLUDED_FROM_BASELINES = ("RIN",)

# fit(design, seed) -> predict(X)
Estimator = Callable[[DesignMatrix, int], Callable[[np.ndarray], np.ndarray]]


def forest_estimator(params: ForestParams) -> Estimator:
    def fit(design, seed):
        return fit_forest(design, with_seed(params, seed)).predict
    return fit


def linear_estimator(kind: str, lam: float) -> Estimator:
    def fit(design, seed):
        return fit_linear(kind, design.features, design.target, lam).predict
    return fit


@dataclass(frozen=True)
class IterationRecord:
    seed: int
    test_mae: float
    prediction: float


@dataclass(frozen=True)
class ForecastResult:
    month: object
    point: float
    std: float
    records: tuple

    @classmethod
    def from_records(cls, month, records) -> "ForecastResult":
        preds = np.array([r.prediction for r in records])
        std = float(np.std(preds, ddof=1)) if preds.size > 1 else 0.0
        return cls(month, float(preds.mean()), std, tuple(records))

    @property
    def test_maes(self) -> np.ndarray:
        return np.array([r.test_mae for r in self.records])

    def to_dict(self) -> dict:
        return {"month": None if self.month is None else format_month(self.month),
                "point": self.point, "std": self.std,
                "iterations": [{"seed": r.seed, "test_mae": _num(r.test_mae),
                                "prediction": r.prediction} for r in self.records]}


def _num(x):
    return None if x is None or (isinstance(x, float) and math.isnan(x)) else float(x)


def resampled_forecast(design: DesignMatrix, query_row, params, iterations: int = 25,
                       base_seed: int = 0, test_fraction: float = 0.2,
                       month=None) -> ForecastResult:
    """Repeat {random 80/20 split, fit on train, score test, predict query}.

    ``params`` is a ForestParams or any Estimator callable.
    """
    fit = params if callable(params) else forest_estimator(params)
    query = np.asarray(query_row, dtype=float).reshape(1, -1)
    if query.shape[1] != design.n_features:
        raise ValueError(f"query row has {query.shape[1]} features, design has {design.n_features}")
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    records = []
    for i in range(iterations):
        seed = derive_seed(base_seed, i)
        train, test = train_test_split(design.n_rows, test_fraction, seed)
        predict = fit(design.subset(train), seed)
        test_mae = mae(predict(design.features[test]), design.target[test])
        records.append(IterationRecord(seed, test_mae, float(predict(query)[0])))
    return ForecastResult.from_records(month, records)


# ---------------------------------------------------------------------------
# rolling backtest

@dataclass(frozen=True, eq=False)
class BacktestStep:
    """Everything a forecaster may see for one target month."""
    month: np.datetime64
    frame: SeriesFrame          # transformed, truncated at month, target blanked at month
    design: DesignMatrix
    query_row: np.ndarray
    config: PipelineConfig
    seed: int


Forecaster = Callable[[BacktestStep], ForecastResult]


@dataclass(frozen=True)
class BacktestRecord:
    month: np.datetime64
    forecast: float
    observed: float
    forecast_std: float
    test_mae: float
    test_mae_std: float

    @property
    def abs_error(self) -> float:
        return abs(self.observed - self.forecast)


@dataclass(frozen=True)
class BacktestReport:
    records: tuple
    model: str = "random_forest"

    @property
    def mae(self) -> float:
        return float(np.mean([r.abs_error for r in self.records]))

    @property
    def mae_std(self) -> float:
        """Standard error of the out-of-sample MAE."""
        errs = np.array([r.abs_error for r in self.records])
        return float(np.std(errs, ddof=1) / math.sqrt(errs.size)) if errs.size > 1 else 0.0

    @property
    def test_mae(self) -> float:
        vals = np.array([r.test_mae for r in self.records])
        return float(np.mean(vals)) if not np.isnan(vals).any() else math.nan

    @property
    def test_mae_std(self) -> float:
        vals = np.array([r.test_mae_std for r in self.records])
        return float(np.mean(vals)) if not np.isnan(vals).any() else math.nan

    def summary(self) -> dict:
        return {"model": self.model, "months": len(self.records), "oos_mae": self.mae,
                "oos_mae_std": self.mae_std, "test_mae": _num(self.test_mae),
                "test_mae_std": _num(self.test_mae_std)}

    def to_dict(self) -> dict:
        return {"summary": self.summary(),
                "records": [{"month": format_month(r.month), "forecast": r.forecast,
                             "observed": r.observed, "abs_error": r.abs_error,
                             "forecast_std": r.forecast_std, "test_mae": _num(r.test_mae),
                             "test_mae_std": _num(r.test_mae_std)} for r in self.records]}

    def to_json(self, path=None) -> str:
        text = json.dumps(self.to_dict(), indent=2, sort_keys=True)
        if path is not None:
            with open(path, "w", encoding="utf-8") as fh:
                fh.write(text + "\n")
        return text

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["date", "forecast", "observed", "abs_error", "forecast_std",
                        "test_mae", "test_mae_std"])
            for r in self.records:
                w.writerow([format_month(r.month), repr(r.forecast), repr(r.observed),
                            repr(r.abs_error), repr(r.forecast_std),
                            _cell(r.test_mae), _cell(r.test_mae_std)])


def _cell(x) -> str:
    return "" if x is None or math.isnan(x) else repr(float(x))


def observed_target(frame: SeriesFrame, config: PipelineConfig) -> np.ndarray:
    """Target series computed from the target's raw source column alone."""
    source = config.target_source()
    specs = [s for s in config.transforms if s.output == config.target]
    sub = SeriesFrame(frame.months, {source: frame.values(source)})
    if specs:
        sub = apply_transforms(sub, [replace(specs[0], output="__target__")])
        return sub.values("__target__")
    return sub.values(source)


def backtest_months(frame: SeriesFrame, config: PipelineConfig, window: int):
    y = observed_target(frame, config)
    idx = np.flatnonzero(~np.isnan(y))
    if idx.size < window:
        raise DataError(f"only {idx.size} observed target months, window is {window}")
    chosen = idx[-window:]
    return frame.months[chosen], y[chosen]


def prepare_step(frame: SeriesFrame, config: PipelineConfig, month, seed: int) -> BacktestStep:
    """Build the information set for ``month``: data before it, plus its regressor row."""
    visible = frame.upto(month).with_missing(config.target_source(), month)
    if config.mode == "forecast":
        # nothing dated m is known when forecasting m
        for name in visible.names:
            visible = visible.with_missing(name, month)
    prepared = config.prepare(visible)
    design = build_design(prepared, config.target, config.lags, config.mode, config.impute)
    if design.n_rows < MIN_ROWS:
        raise DataError(f"insufficient history before {format_month(month)}: "
                        f"{design.n_rows} rows")
    query = design_row(prepared, config.lags, month, design.fill_values)
    return BacktestStep(np.datetime64(month, "M"), prepared, design, query, config, seed)


def forest_forecaster(params: ForestParams, iterations: int = 25,
                      test_fraction: float = 0.2) -> Forecaster:
    def run(step):
        return resampled_forecast(step.design, step.query_row, params, iterations,
                                  step.seed, test_fraction, step.month)
    return run


def rolling_backtest(frame: SeriesFrame, config: PipelineConfig, window: int = 24,
                     params: ForestParams = ForestParams(), iterations: int = 25,
                     base_seed: int = 0, forecaster: Forecaster | None = None,
                     model: str = "random_forest", n_jobs: int = 1) -> BacktestReport:
    """One-step-ahead out-of-sample evaluation over the last ``window`` target months.

    Each month sees only rows strictly before it plus its own regressor row;
    the forecaster (default: resampled forest) never sees the month's target.
    """
    if window < 1:
        raise ValueError("window must be >= 1")
    forecaster = forecaster or forest_forecaster(params, iterations)
    months, observed = backtest_months(frame, config, window)

    def one(i):
        month = months[i]
        seed = derive_seed(base_seed, int(month.astype(int)))
        step = prepare_step(frame, config, month, seed)
        res = forecaster(step)
        maes = res.test_maes
        if maes.size and not np.isnan(maes).any():
            tm = float(maes.mean())
            ts = float(np.std(maes, ddof=1)) if maes.size > 1 else 0.0
        else:
            tm = ts = math.nan
        return BacktestRecord(month, res.point, float(observed[i]), res.std, tm, ts)

    if n_jobs > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            records = list(pool.map(one, range(len(months))))
    else:
        records = [one(i) for i in range(len(months))]
    return BacktestReport(tuple(records), model)


# ---------------------------------------------------------------------------
# baseline forecasters

def _drop(step: BacktestStep, exclude):
    design = step.design.drop_variables(exclude)
    keep = [step.design.feature_index(n) for n in design.feature_names]
    return design, step.query_row[keep]


def linear_forecaster(kind: str, iterations: int = 25, lambda_grid=None, k: int = 10,
                      exclude=EXCLUDED_FROM_BASELINES, test_fraction: float = 0.2,
                      seen_features: list | None = None) -> Forecaster:
    """Per month: pick lambda by k-fold CV, then the resampled 80/20 protocol."""
    def run(step):
        design, query = _drop(step, exclude)
        if seen_features is not None:
            seen_features.append(design.feature_names)
        lam = cv_lambda(design, kind, lambda_grid, min(k, design.n_rows), step.seed)
        return resampled_forecast(design, query, linear_estimator(kind, lam), iterations,
                                  step.seed, test_fraction, step.month)
    return run


def arma_forecaster(max_p: int = 5, max_q: int = 5) -> Forecaster:
    """Per month: AIC-selected ARMA on the target history, one-step forecast."""
    def run(step):
        y = step.frame.values(step.config.target)[:-1]
        missing = np.flatnonzero(np.isnan(y))
        if missing.size:
            y = y[missing[-1] + 1:]
        model = select_arma(y, max_p, max_q)
        point = arma_forecast_1step(model, y)
        return ForecastResult(step.month, point, 0.0,
                              (IterationRecord(step.seed, math.nan, point),))
    return run


# ---------------------------------------------------------------------------
# comparison

@dataclass(frozen=True)
class CompareConfig:
    pipeline: PipelineConfig
    params: ForestParams = ForestParams()
    window: int = 24
    iterations: int = 25
    base_seed: int = 0
    k: int = 10
    lambda_grid: tuple | None = None
    max_p: int = 5
    max_q: int = 5
    exclude: tuple = EXCLUDED_FROM_BASELINES
    consensus: Mapping | None = None
    forecasters: Mapping | None = None      # model name -> Forecaster override


@dataclass(frozen=True)
class ModelRow:
    model: str
    test_mae: float | None
    test_std: float | None
    oos_mae: float | None
    oos_std: float | None


def indistinguishable(a: float, sa, b: float, sb) -> bool:
    """|a - b| below the larger of the two standard deviations (identical values always)."""
    if a is None or b is None:
        return False
    stds = [s for s in (sa, sb) if s is not None]
    if a == b:
        return True
    return bool(stds) and abs(a - b) < max(stds)


@dataclass(frozen=True)
class ComparisonReport:
    rows: tuple
    backtests: Mapping = field(default_factory=dict, repr=False)
    baseline_features: tuple = ()

    def row(self, model: str) -> ModelRow:
        for r in self.rows:
            if r.model == model:
                return r
        raise KeyError(model)

    def pairs(self) -> list[dict]:
        out = []
        for metric in ("test", "oos"):
            for ra, rb in itertools.combinations(self.rows, 2):
                a, sa = getattr(ra, f"{metric}_mae"), getattr(ra, f"{metric}_std")
                b, sb = getattr(rb, f"{metric}_mae"), getattr(rb, f"{metric}_std")
                if a is None or b is None:
                    continue
                out.append({"metric": metric, "model_a": ra.model, "model_b": rb.model,
                            "difference": abs(a - b),
                            "threshold": max([s for s in (sa, sb) if s is not None],
                                             default=None),
                            "indistinguishable": indistinguishable(a, sa, b, sb)})
        return out

    def to_dict(self) -> dict:
        return {"rows": [{"model": r.model, "test_mae": r.test_mae, "test_std": r.test_std,
                          "oos_mae": r.oos_mae, "oos_std": r.oos_std} for r in self.rows],
                "pairs": self.pairs(),
                "baseline_features": list(self.baseline_features)}

    def to_json(self, path=None) -> str:
        text = json.dumps(self.to_dict(), indent=2, sort_keys=True)
        if path is not None:
            with open(path, "w", encoding="utf-8") as fh:
                fh.write(text + "\n")
        return text

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["model", "test_mae", "test_std", "oos_mae", "oos_std"])
            for r in self.rows:
                w.writerow([r.model, *(_na(v) for v in
                                       (r.test_mae, r.test_std, r.oos_mae, r.oos_std))])

    def pairs_to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["metric", "model_a", "model_b", "difference", "threshold",
                        "indistinguishable"])
            for p in self.pairs():
                w.writerow([p["metric"], p["model_a"], p["model_b"], repr(p["difference"]),
                            _na(p["threshold"]), str(p["indistinguishable"]).lower()])

    def render(self) -> str:
        def cell(v, s):
            if v is None:
                return "N/A"
            return f"{v:.2f}% ({s:.2f}%)" if s is not None else f"{v:.2f}%"
        lines = [f"{'':<22}" + "".join(f"{r.model:>22}" for r in self.rows)]
        lines.append(f"{'test set':<22}" + "".join(
            f"{cell(r.test_mae, r.test_std):>22}" for r in self.rows))
        lines.append(f"{'1-month out of sample':<22}" + "".join(
            f"{cell(r.oos_mae, r.oos_std):>22}" for r in self.rows))
        close = [p for p in self.pairs() if p["indistinguishable"]]
        if close:
            lines.append("statistically indistinguishable (within 1 s.d.):")
            lines += [f"  {p['metric']}: {p['model_a']} ~ {p['model_b']}" for p in close]
        return "\n".join(lines)


def _na(v) -> str:
    return "N/A" if v is None or (isinstance(v, float) and math.isnan(v)) else repr(float(v))


def consensus_mae(consensus: Mapping, months, observed) -> float:
    """MAE of the supplied forecast dated closest to each realised month (earlier on ties)."""
    if not consensus:
        raise DataError("empty consensus forecasts")
    dates = np.array(sorted(consensus), dtype="datetime64[M]")
    errs = []
    for month, obs in zip(months, observed):
        gap = np.abs((dates - month).astype(int))
        j = int(np.argmin(gap))     # first minimum = earlier date
        errs.append(abs(obs - consensus[dates[j]]))
    return float(np.mean(errs))


def _row(model, report: BacktestReport, with_test: bool) -> ModelRow:
    test = report.test_mae if with_test else None
    test_std = report.test_mae_std if with_test else None
    return ModelRow(model, test, test_std, report.mae, report.mae_std)


def compare_models(frame: SeriesFrame, config: CompareConfig, n_jobs: int = 1) -> ComparisonReport:
    """Backtest the forest and each baseline under one protocol; add the consensus row."""
    pc = config.pipeline
    overrides = dict(config.forecasters or {})
    seen = []
    forecasters = {
        "random_forest": forest_forecaster(config.params, config.iterations),
        "arma": arma_forecaster(config.max_p, config.max_q),
        "lasso": linear_forecaster("l1", config.iterations, config.lambda_grid, config.k,
                                   config.exclude, seen_features=seen),
        "ridge": linear_forecaster("l2", config.iterations, config.lambda_grid, config.k,
                                   config.exclude, seen_features=seen),
    }
    forecasters.update(overrides)
    backtests = {}
    for name in MODELS[:4]:
        backtests[name] = rolling_backtest(frame, pc, config.window, config.params,
                                           config.iterations, config.base_seed,
                                           forecasters[name], name, n_jobs)
    rows = [_row("random_forest", backtests["random_forest"], True),
            _row("arma", backtests["arma"], False),
            _row("lasso", backtests["lasso"], True),
            _row("ridge", backtests["ridge"], True)]
    if config.consensus:
        months, observed = backtest_months(frame, pc, config.window)
        rows.append(ModelRow("external_consensus", None, None,
                             consensus_mae(config.consensus, months, observed), None))
    else:
        rows.append(ModelRow("external_consensus", None, None, None, None))
    features = tuple(sorted(set(itertools.chain.from_iterable(seen))))
    return ComparisonReport(tuple(rows), backtests, features)
