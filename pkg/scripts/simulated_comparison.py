"""Forest versus ARMA, Lasso and Ridge on a simulated panel.

    python scripts/simulated_comparison.py --window 24 --n-trees 200 --out out/compare
"""
import argparse
from pathlib import Path

from rfinflation.forecast import CompareConfig, compare_models
from rfinflation.rf_core import ForestParams
from rfinflation.simdata import SimConfig, default_pipeline, generate_panel


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--months", type=int, default=480)
    ap.add_argument("--window", type=int, default=24)
    ap.add_argument("--iterations", type=int, default=25)
    ap.add_argument("--n-trees", type=int, default=200)
    ap.add_argument("--mode", choices=("nowcast", "forecast"), default="nowcast")
    ap.add_argument("--jobs", type=int, default=1)
    ap.add_argument("--out", default="out/compare")
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    frame = generate_panel(SimConfig(months=args.months, seed=args.seed))
    cfg = CompareConfig(default_pipeline(args.mode), ForestParams(n_trees=args.n_trees),
                        window=args.window, iterations=args.iterations, base_seed=args.seed)
    report = compare_models(frame, cfg, args.jobs)
    report.to_csv(out / "comparison.csv")
    report.pairs_to_csv(out / "comparison_pairs.csv")
    report.to_json(out / "comparison.json")
    print(report.render())


if __name__ == "__main__":
    main()
