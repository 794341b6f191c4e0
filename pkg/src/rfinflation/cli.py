"""Command-line front end: ``rfinflation <command> [flags]``.

Every command reads a monthly panel (``--data``) and a lag/transform spec
(``--spec``, YAML; defaults to the synthetic-panel spec), then writes CSV and
JSON reports, plus an SVG where a figure makes sense, into ``--out``.
A YAML ``--config`` file may set any flag; explicit flags win.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np
import yaml

from . import svg
from .baselines import NumericalError
from .data import (DataError, PipelineConfig, format_month, load_consensus_csv, load_csv,
                   load_pipeline_config, parse_month, save_pipeline_config)
from .explain import impurity_importance, pdp_1d, pdp_2d
from .forecast import (CompareConfig, compare_models, prepare_step, resampled_forecast,
                       rolling_backtest)
from .rf_core import ForestParams, fit_forest
from .simdata import SimConfig, default_pipeline, generate_panel
from .tuning import TuneGrid, grid_search

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERICAL = 0, 1, 2, 3
COMMANDS = ("tune", "forecast", "backtest", "compare", "importance", "pdp", "simulate")


class UsageError(Exception):
    pass


@dataclass
class RunConfig:
    """Resolved settings for one command (defaults < config file < flags)."""
    command: str
    data: str | None = None
    spec: str | None = None
    out: str = "out"
    seed: int = 0
    iterations: int = 25
    mode: str | None = None
    window: int = 24
    jobs: int = 1
    n_trees: int = 500
    max_depth: int = 15
    feature_fraction: float = 0.3
    min_leaf: int = 1
    aggregation: str = "median"
    month: str | None = None
    folds: int = 10
    consensus: str | None = None
    features: str | None = None
    two_d: bool = False
    grid_points: int = 50
    months: int = 480
    grid_n_trees: object = (100, 300, 500)
    grid_max_depth: object = (5, 10, 15, 20)
    grid_min_leaf: object = (1, 5)

    def forest_params(self) -> ForestParams:
        return ForestParams(n_trees=self.n_trees, max_depth=self.max_depth,
                            feature_fraction=self.feature_fraction, min_leaf=self.min_leaf,
                            aggregation=self.aggregation, seed=self.seed)

    def out_dir(self) -> Path:
        path = Path(self.out)
        path.mkdir(parents=True, exist_ok=True)
        return path


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _global_flags(p: argparse.ArgumentParser) -> None:
    s = argparse.SUPPRESS
    p.add_argument("--config", default=s, help="YAML file predefining any flag")
    p.add_argument("--data", default=s, help="monthly panel CSV")
    p.add_argument("--spec", default=s, help="lag/transform spec YAML")
    p.add_argument("--out", default=s, help="output directory (created if absent)")
    p.add_argument("--seed", type=int, default=s, help="base seed")
    p.add_argument("--iterations", type=int, default=s, help="resampled fits per forecast")
    p.add_argument("--mode", choices=("nowcast", "forecast"), default=s)
    p.add_argument("--window", type=int, default=s, help="backtest months")
    p.add_argument("--jobs", type=int, default=s, help="worker threads")
    p.add_argument("--n-trees", dest="n_trees", type=int, default=s)
    p.add_argument("--max-depth", dest="max_depth", type=int, default=s)
    p.add_argument("--feature-fraction", dest="feature_fraction", type=float, default=s)
    p.add_argument("--min-leaf", dest="min_leaf", type=int, default=s)
    p.add_argument("--aggregation", choices=("median", "mean"), default=s)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="rfinflation", description=__doc__.splitlines()[0])
    _global_flags(parser)
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    s = argparse.SUPPRESS
    cmds = {}
    for name, text in [("tune", "k-fold grid search over forest hyperparameters"),
                       ("forecast", "resampled forecast for one month"),
                       ("backtest", "rolling one-step backtest of the forest"),
                       ("compare", "forest vs ARMA, Lasso, Ridge and consensus"),
                       ("importance", "impurity importance of a full-sample forest"),
                       ("pdp", "partial dependence curves or surfaces"),
                       ("simulate", "write a synthetic panel and its spec")]:
        cmds[name] = sub.add_parser(name, help=text, description=text)
        _global_flags(cmds[name])
    cmds["tune"].add_argument("--folds", type=int, default=s)
    for flag in ("n-trees", "max-depth", "min-leaf"):
        cmds["tune"].add_argument(f"--grid-{flag}", dest=f"grid_{flag.replace('-', '_')}",
                                  default=s, help="comma-separated candidates")
    cmds["forecast"].add_argument("--month", default=s, help="target month YYYY-MM")
    cmds["compare"].add_argument("--consensus", default=s, help="date,forecast CSV")
    cmds["compare"].add_argument("--folds", type=int, default=s, help="lambda CV folds")
    cmds["pdp"].add_argument("--features", default=s, help="comma-separated names")
    cmds["pdp"].add_argument("--2d", dest="two_d", action="store_true", default=s)
    cmds["pdp"].add_argument("--grid-points", dest="grid_points", type=int, default=s)
    cmds["simulate"].add_argument("--months", type=int, default=s)
    return parser


def resolve(argv) -> RunConfig:
    ns = vars(build_parser().parse_args(argv))
    command = ns.pop("command", None)
    if command is None:
        raise UsageError("rfinflation: a command is required "
                         f"({', '.join(COMMANDS)})")
    settings = {}
    if "config" in ns:
        path = Path(ns.pop("config"))
        if not path.exists():
            raise DataError(f"config file not found: {path}")
        with open(path, encoding="utf-8") as fh:
            loaded = yaml.safe_load(fh) or {}
        if not isinstance(loaded, dict):
            raise UsageError(f"{path}: expected a mapping")
        settings.update({k.replace("-", "_"): v for k, v in loaded.items()})
    settings.update(ns)
    known = {f.name for f in fields(RunConfig)} - {"command"}
    unknown = sorted(set(settings) - known)
    if unknown:
        raise UsageError(f"unknown setting(s): {', '.join(unknown)}")
    return RunConfig(command=command, **settings)


# ---------------------------------------------------------------------------
# shared loading

def _need(path, what):
    if path is None:
        raise UsageError(f"--{what} is required")
    if not Path(path).exists():
        raise DataError(f"{what} file not found: {path}")
    return path


def _pipeline(cfg: RunConfig) -> PipelineConfig:
    pc = load_pipeline_config(_need(cfg.spec, "spec")) if cfg.spec else default_pipeline()
    if cfg.mode and cfg.mode != pc.mode:
        pc = pc.with_mode(cfg.mode)
    return pc


def _load(cfg: RunConfig):
    frame = load_csv(_need(cfg.data, "data"))
    pc = _pipeline(cfg)
    return frame, pc


def _ints(value) -> tuple:
    """Candidate list from a flag string ("100,300") or a config-file list."""
    items = value.split(",") if isinstance(value, str) else list(value)
    try:
        return tuple(int(v) for v in items if str(v).strip())
    except ValueError:
        raise UsageError(f"expected integers, got {value!r}") from None


def _write_json(obj, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(obj, indent=2, sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# commands

def cmd_tune(cfg: RunConfig) -> int:
    frame, pc = _load(cfg)
    grid = TuneGrid(_ints(cfg.grid_n_trees), _ints(cfg.grid_max_depth),
                    (cfg.feature_fraction,), _ints(cfg.grid_min_leaf), cfg.folds, cfg.seed,
                    cfg.forest_params())
    report = grid_search(pc.design(frame), grid, cfg.jobs)
    out = cfg.out_dir()
    report.to_csv(out / "tune.csv")
    report.to_json(out / "tune.json")
    print(f"best: n_trees={report.best.n_trees} max_depth={report.best.max_depth} "
          f"min_leaf={report.best.min_leaf}")
    return EXIT_OK


def cmd_forecast(cfg: RunConfig) -> int:
    if cfg.month is None:
        raise UsageError("forecast needs --month YYYY-MM")
    frame, pc = _load(cfg)
    month = parse_month(cfg.month)
    step = prepare_step(frame, pc, month, cfg.seed)
    res = resampled_forecast(step.design, step.query_row, cfg.forest_params(),
                             cfg.iterations, cfg.seed, month=month)
    out = cfg.out_dir()
    _write_json(res.to_dict(), out / "forecast.json")
    with open(out / "forecast.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["iteration", "seed", "test_mae", "prediction"])
        for i, r in enumerate(res.records):
            w.writerow([i, r.seed, repr(r.test_mae), repr(r.prediction)])
    print(f"{format_month(month)}: {res.point:.4f} (sd {res.std:.4f})")
    return EXIT_OK


def cmd_backtest(cfg: RunConfig) -> int:
    frame, pc = _load(cfg)
    report = rolling_backtest(frame, pc, cfg.window, cfg.forest_params(), cfg.iterations,
                              cfg.seed, n_jobs=cfg.jobs)
    out = cfg.out_dir()
    report.to_csv(out / "backtest.csv")
    report.to_json(out / "backtest.json")
    x = np.arange(len(report.records))
    svg.save(svg.line_chart(x, {"observed": [r.observed for r in report.records],
                                "forecast": [r.forecast for r in report.records]},
                            title="One-step backtest", xlabel="month index",
                            ylabel=pc.target), out / "backtest.svg")
    s = report.summary()
    print(f"out-of-sample MAE {s['oos_mae']:.4f} (se {s['oos_mae_std']:.4f})")
    return EXIT_OK


def cmd_compare(cfg: RunConfig) -> int:
    frame, pc = _load(cfg)
    consensus = load_consensus_csv(cfg.consensus) if cfg.consensus else None
    cc = CompareConfig(pc, cfg.forest_params(), cfg.window, cfg.iterations, cfg.seed,
                       cfg.folds, consensus=consensus)
    report = compare_models(frame, cc, cfg.jobs)
    out = cfg.out_dir()
    report.to_csv(out / "comparison.csv")
    report.pairs_to_csv(out / "comparison_pairs.csv")
    report.to_json(out / "comparison.json")
    text = report.render()
    with open(out / "comparison.txt", "w", encoding="utf-8") as fh:
        fh.write(text + "\n")
    print(text)
    return EXIT_OK


def _full_forest(cfg: RunConfig):
    frame, pc = _load(cfg)
    design = pc.design(frame)
    return fit_forest(design, cfg.forest_params(), cfg.jobs), design


def cmd_importance(cfg: RunConfig) -> int:
    forest, design = _full_forest(cfg)
    report = impurity_importance(forest, design)
    out = cfg.out_dir()
    report.to_csv(out / "importance.csv")
    ranked = report.ranked()
    svg.save(svg.bar_chart([n for n, _ in ranked], [v for _, v in ranked],
                           title="Impurity importance", xlabel="share of MAE reduction"),
             out / "importance.svg")
    for name, share in ranked[:5]:
        print(f"{name:<24}{share:.4f}")
    return EXIT_OK


def cmd_pdp(cfg: RunConfig) -> int:
    if not cfg.features:
        raise UsageError("pdp needs --features name[,name]")
    names = [f.strip() for f in str(cfg.features).split(",") if f.strip()]
    if cfg.two_d and len(names) != 2:
        raise UsageError("--2d needs exactly two features")
    forest, design = _full_forest(cfg)
    labels = [design.resolve(n) for n in names]
    out = cfg.out_dir()
    if cfg.two_d:
        pdp = pdp_2d(forest, design, labels[0], labels[1],
                     (cfg.grid_points, cfg.grid_points))
        stem = f"pdp_{labels[0]}_{labels[1]}"
        pdp.to_csv(out / f"{stem}.csv")
        svg.save(svg.heatmap(pdp.grids[0], pdp.grids[1], pdp.response,
                             title="Partial dependence", xlabel=labels[0], ylabel=labels[1]),
                 out / f"{stem}.svg")
        print(f"wrote {stem}.csv and {stem}.svg")
        return EXIT_OK
    for label in labels:
        pdp = pdp_1d(forest, design, label, cfg.grid_points)
        pdp.to_csv(out / f"pdp_{label}.csv")
        svg.save(svg.line_chart(pdp.grids[0], {label: pdp.response},
                                title="Partial dependence", xlabel=label, ylabel="response"),
                 out / f"pdp_{label}.svg")
        print(f"wrote pdp_{label}.csv and pdp_{label}.svg")
    return EXIT_OK


def cmd_simulate(cfg: RunConfig) -> int:
    sim = SimConfig(months=cfg.months, seed=cfg.seed)
    frame = generate_panel(sim)
    out = cfg.out_dir()
    frame.to_csv(out / "panel.csv")
    save_pipeline_config(default_pipeline(cfg.mode or "nowcast"), out / "spec.yaml")
    _write_json(asdict(sim), out / "simconfig.json")
    print(f"wrote {len(frame)} months to {out / 'panel.csv'}")
    return EXIT_OK


HANDLERS = {"tune": cmd_tune, "forecast": cmd_forecast, "backtest": cmd_backtest,
            "compare": cmd_compare, "importance": cmd_importance, "pdp": cmd_pdp,
            "simulate": cmd_simulate}


def main(argv=None) -> int:
    try:
        cfg = resolve(sys.argv[1:] if argv is None else argv)
        return HANDLERS[cfg.command](cfg)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (TypeError, ValueError) as exc:
        # bad parameter values (e.g. n_trees 0) are usage problems
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
