import json
import math

import numpy as np
import numpy.testing as npt
import pytest

from rfinflation.data import (AuditedFrame, DataError, DesignMatrix, derive_seed, format_month,
                              parse_month, train_test_split)
from rfinflation.forecast import (CompareConfig, ForecastResult, IterationRecord, ModelRow,
                                  ComparisonReport, backtest_months, compare_models,
                                  consensus_mae, indistinguishable, linear_forecaster,
                                  observed_target, prepare_step, resampled_forecast,
                                  rolling_backtest)
from rfinflation.rf_core import ForestParams, fit_forest, with_seed
from rfinflation.simdata import default_pipeline

from conftest import random_design

FAST = ForestParams(n_trees=8, max_depth=6)


def oracle_forecaster(frame, config):
    truth = dict(zip(frame.months, observed_target(frame, config)))

    def run(step):
        v = float(truth[step.month])
        return ForecastResult(step.month, v, 0.0, (IterationRecord(step.seed, 0.0, v),))
    return run


def constant_forecaster(value):
    def run(step):
        return ForecastResult(step.month, value, 0.5, (IterationRecord(step.seed, 1.0, value),
                                                       IterationRecord(step.seed, 1.0, value)))
    return run


class TestResampledForecast:

    def test_single_iteration(self, rng):
        design = random_design(rng, n=50)
        q = np.zeros(design.n_features)
        res = resampled_forecast(design, q, FAST, iterations=1, base_seed=4)
        assert res.std == 0.0 and len(res.records) == 1
        seed = derive_seed(4, 0)
        train, _ = train_test_split(50, 0.2, seed)
        direct = fit_forest(design.subset(train), with_seed(FAST, seed)).predict(q[None])[0]
        assert res.point == direct

    def test_constant_target(self, rng):
        design = random_design(rng, n=40)
        design = DesignMatrix(np.full(40, 2.5), design.features, design.feature_names,
                              design.months)
        res = resampled_forecast(design, design.features[0], FAST, iterations=5)
        assert res.point == 2.5 and res.std == 0.0
        assert all(r.test_mae == 0.0 for r in res.records)

    def test_protocol_shape_and_recomputation(self, rng):
        design = random_design(rng, n=60)
        res = resampled_forecast(design, design.features[3], FAST, iterations=25, base_seed=1)
        preds = np.array([r.prediction for r in res.records])
        assert len(res.records) == 25
        assert abs(res.point - preds.mean()) <= 1e-12
        assert abs(res.std - preds.std(ddof=1)) <= 1e-12
        assert preds.min() <= res.point <= preds.max()
        assert [r.seed for r in res.records] == [derive_seed(1, i) for i in range(25)]

    def test_query_dimension(self, rng):
        with pytest.raises(ValueError):
            resampled_forecast(random_design(rng), [1.0], FAST, iterations=2)

    def test_deterministic(self, rng):
        design = random_design(rng, n=50)
        a = resampled_forecast(design, design.features[0], FAST, iterations=4, base_seed=9)
        b = resampled_forecast(design, design.features[0], FAST, iterations=4, base_seed=9)
        assert a.to_dict() == b.to_dict()


class TestRollingBacktest:

    def test_oracle_stub_has_zero_error(self, sim_frame):
        pc = default_pipeline()
        report = rolling_backtest(sim_frame, pc, window=6,
                                  forecaster=oracle_forecaster(sim_frame, pc))
        assert len(report.records) == 6
        assert report.mae == 0.0

    def test_single_month(self, sim_frame):
        pc = default_pipeline()
        report = rolling_backtest(sim_frame, pc, window=1, params=FAST, iterations=3)
        assert len(report.records) == 1
        assert report.records[0].month == sim_frame.months[-1]

    def test_summary_is_mean_abs_error(self, sim_frame):
        pc = default_pipeline()
        report = rolling_backtest(sim_frame, pc, window=4, params=FAST, iterations=3)
        errs = [abs(r.observed - r.forecast) for r in report.records]
        assert report.mae == pytest.approx(np.mean(errs), abs=1e-15)
        assert report.mae_std == pytest.approx(np.std(errs, ddof=1) / 2, abs=1e-15)
        months, obs = backtest_months(sim_frame, pc, 4)
        npt.assert_array_equal([r.observed for r in report.records], obs)

    def test_thread_invariant(self, sim_frame):
        pc = default_pipeline()
        a = rolling_backtest(sim_frame, pc, window=3, params=FAST, iterations=2)
        b = rolling_backtest(sim_frame, pc, window=3, params=FAST, iterations=2, n_jobs=3)
        assert a.to_json() == b.to_json()

    def test_insufficient_history(self, sim_frame):
        with pytest.raises(DataError):
            rolling_backtest(sim_frame, default_pipeline(), window=170, params=FAST)

    def test_step_hides_target(self, sim_frame):
        pc = default_pipeline()
        m = sim_frame.months[-1]
        step = prepare_step(sim_frame, pc, m, 0)
        assert step.frame.months[-1] == m
        assert math.isnan(step.frame.values("inflacion")[-1])
        assert step.design.months[-1] < m
        assert step.design.n_features == step.query_row.size

    @pytest.mark.parametrize("mode", ["nowcast", "forecast"])
    def test_no_look_ahead(self, sim_frame, mode):
        pc = default_pipeline(mode)
        audited = AuditedFrame.wrap(sim_frame)
        rolling_backtest(audited, pc, window=3, params=FAST, iterations=2)
        source = pc.target_source()
        fitted = [(c, col, m) for c, col, m in audited.log if c is not None]
        assert fitted
        for cutoff, col, month in fitted:
            assert month <= cutoff
            if col == source or mode == "forecast":
                assert month < cutoff, (format_month(cutoff), col, format_month(month))
        # reads outside any cutoff are the scorer fetching realised targets
        assert {col for c, col, _ in audited.log if c is None} == {source}

    def test_serialization(self, tmp_path, sim_frame):
        report = rolling_backtest(sim_frame, default_pipeline(), window=2, params=FAST,
                                  iterations=2)
        report.to_csv(tmp_path / "b.csv")
        rec = json.loads(report.to_json(tmp_path / "b.json"))
        assert rec["summary"]["months"] == 2
        assert (tmp_path / "b.csv").read_text().startswith("date,forecast,observed,abs_error")


class TestIndistinguishable:

    @pytest.mark.parametrize("a, sa, b, sb, expected", [
        (1.0, 0.3, 1.2, 0.1, True), (1.0, 0.1, 1.2, 0.1, False), (1.0, 0.1, 1.1, 0.1, False),
        (1.0, None, 1.0, None, True), (1.0, None, 1.5, 0.6, True), (1.0, None, 1.1, None, False),
        (None, None, 1.0, 0.2, False),
    ])
    def test_rule(self, a, sa, b, sb, expected):
        assert indistinguishable(a, sa, b, sb) is expected

    def test_pairs_skip_missing(self):
        rows = (ModelRow("a", 1.0, 0.2, 1.0, 0.1), ModelRow("b", None, None, 1.05, 0.1),
                ModelRow("c", None, None, None, None))
        pairs = ComparisonReport(rows).pairs()
        assert [(p["metric"], p["model_a"], p["model_b"]) for p in pairs] == [("oos", "a", "b")]
        assert pairs[0]["indistinguishable"]


class TestConsensus:

    def test_nearest_month_earlier_on_tie(self):
        cons = {parse_month("2020-01"): 1.0, parse_month("2020-03"): 3.0}
        months = np.array(["2020-01", "2020-02", "2020-03", "2020-06"], dtype="datetime64[M]")
        # 2020-02 is equidistant and takes the earlier forecast
        assert consensus_mae(cons, months, [1.0, 2.0, 3.0, 4.0]) == pytest.approx((0 + 1 + 0 + 1) / 4)

    def test_empty(self):
        with pytest.raises(DataError):
            consensus_mae({}, [], [])


@pytest.fixture(scope="module")
def report(sim_frame):
    cons = {m: 3.0 for m in sim_frame.months[-6:]}
    cfg = CompareConfig(default_pipeline(), FAST, window=3, iterations=2, k=3,
                        lambda_grid=(0.01, 0.1), max_p=2, max_q=1, consensus=cons)
    return compare_models(sim_frame, cfg)


class TestCompareModels:

    def test_shape_and_na(self, report, tmp_path):
        assert [r.model for r in report.rows] == ["random_forest", "arma", "lasso", "ridge",
                                                  "external_consensus"]
        report.to_csv(tmp_path / "c.csv")
        lines = (tmp_path / "c.csv").read_text().splitlines()
        assert lines[0] == "model,test_mae,test_std,oos_mae,oos_std"
        cells = {l.split(",")[0]: l.split(",")[1:] for l in lines[1:]}
        assert cells["arma"][:2] == ["N/A", "N/A"] and "N/A" not in cells["arma"][2:]
        assert cells["external_consensus"] == ["N/A", "N/A", cells["external_consensus"][2], "N/A"]
        for m in ("random_forest", "lasso", "ridge"):
            assert "N/A" not in cells[m]

    def test_reserves_excluded_from_linear_baselines(self, report, sim_design):
        assert "RIN_t" in sim_design.feature_names
        assert report.baseline_features
        assert "RIN_t" not in report.baseline_features

    def test_deterministic(self, report, sim_frame):
        cons = {m: 3.0 for m in sim_frame.months[-6:]}
        cfg = CompareConfig(default_pipeline(), FAST, window=3, iterations=2, k=3,
                            lambda_grid=(0.01, 0.1), max_p=2, max_q=1, consensus=cons)
        assert compare_models(sim_frame, cfg).to_json() == report.to_json()

    def test_identical_stubs(self, sim_frame):
        stub = constant_forecaster(4.0)
        cfg = CompareConfig(default_pipeline(), FAST, window=3,
                            forecasters={"random_forest": stub, "arma": stub,
                                         "lasso": stub, "ridge": stub})
        report = compare_models(sim_frame, cfg)
        rf, lasso = report.row("random_forest"), report.row("lasso")
        assert (rf.test_mae, rf.test_std, rf.oos_mae, rf.oos_std) == \
            (lasso.test_mae, lasso.test_std, lasso.oos_mae, lasso.oos_std)
        flags = {(p["metric"], p["model_a"], p["model_b"]): p["indistinguishable"]
                 for p in report.pairs()}
        assert flags[("test", "random_forest", "lasso")]
        assert flags[("oos", "random_forest", "lasso")]
        assert report.row("external_consensus").oos_mae is None
        assert "indistinguishable" in report.render()

    def test_linear_forecaster_records_features(self, sim_frame):
        seen = []
        step = prepare_step(sim_frame, default_pipeline(), sim_frame.months[-1], 0)
        res = linear_forecaster("l2", iterations=3, lambda_grid=(0.1,), k=3,
                                seen_features=seen)(step)
        assert len(res.records) == 3
        assert "RIN_t" not in seen[0] and len(seen[0]) == step.design.n_features - 1
