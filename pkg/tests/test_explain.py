import numpy as np
import numpy.testing as npt
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rfinflation.data import DataError, DesignMatrix
from rfinflation.explain import (ImportanceReport, PdpGrid, impurity_importance,
                                 largest_slope_increase, pdp_1d, pdp_2d, quantile_grid,
                                 split_thresholds)
from rfinflation.rf_core import LEAF, ForestParams, Tree, fit_forest, forest_from_trees
from rfinflation.simdata import SimConfig, default_pipeline, generate_panel

from conftest import random_design


def design_from(X, y, names=None):
    X = np.asarray(X, dtype=float)
    names = names or tuple(f"x{j}_t" for j in range(X.shape[1]))
    months = np.datetime64("2000-01", "M") + np.arange(X.shape[0])
    return DesignMatrix(np.asarray(y, dtype=float), X, tuple(names), months)


def node_of(tree, row):
    path, node = [0], 0
    while tree.feature[node] != LEAF:
        node = tree.left[node] if row[tree.feature[node]] <= tree.threshold[node] \
            else tree.right[node]
        path.append(node)
    return path


def credit_oracle(forest, design):
    """Recompute split credits node by node from each tree's in-bag rows."""
    total = np.zeros(design.n_features)
    for tree, rows in zip(forest.trees, forest.in_bag):
        residents = {}
        for r in rows:
            for node in node_of(tree, design.features[r]):
                residents.setdefault(node, []).append(design.target[r])

        def sad(node):
            ys = np.array(residents.get(node, []))
            return float(np.abs(ys - np.median(ys)).sum()) if ys.size else 0.0
        for node in range(tree.n_nodes):
            if tree.feature[node] != LEAF:
                gain = sad(node) - sad(tree.left[node]) - sad(tree.right[node])
                total[tree.feature[node]] += max(gain, 0.0)
    return total / len(forest.trees)


class TestImportance:

    def test_hand_stump(self):
        tree = Tree.from_dict({"feature": 0, "threshold": 0.0, "value": 0.0, "count": 6,
                               "sad": 10.0, "left": {"value": -1.0, "count": 3, "sad": 1.0},
                               "right": {"value": 1.0, "count": 3, "sad": 1.0}})
        design = random_design(np.random.default_rng(0), d=3)
        rep = impurity_importance(forest_from_trees([tree], design.feature_names), design)
        npt.assert_array_equal(rep.shares, [1.0, 0.0, 0.0])
        assert rep.raw[0] == 8.0

    def test_matches_resident_oracle(self, rng):
        design = random_design(rng, n=50, d=4)
        forest = fit_forest(design, ForestParams(n_trees=5, max_depth=3, seed=2))
        rep = impurity_importance(forest, design)
        npt.assert_allclose(rep.raw, credit_oracle(forest, design), rtol=0, atol=1e-9)

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 10_000))
    def test_shares_non_negative_and_normalised(self, seed):
        design = random_design(np.random.default_rng(seed), n=40, d=5)
        forest = fit_forest(design, ForestParams(n_trees=6, max_depth=4, seed=seed))
        rep = impurity_importance(forest, design)
        assert np.all(rep.shares >= 0)
        assert abs(rep.shares.sum() - 1.0) <= 1e-12

    def test_unused_feature_gets_zero(self, rng):
        design = random_design(rng, n=40, d=3)
        forest = fit_forest(design, ForestParams(n_trees=4, max_depth=3,
                                                 feature_fraction=1.0))
        used = {int(f) for t in forest.trees for f in t.feature if f != LEAF}
        rep = impurity_importance(forest, design)
        for j in set(range(3)) - used:
            assert rep.shares[j] == 0.0

    def test_depth_zero_forest_is_all_zero(self, rng):
        design = random_design(rng)
        forest = fit_forest(design, ForestParams(n_trees=3, max_depth=0))
        assert np.all(impurity_importance(forest, design).shares == 0.0)

    def test_dominant_lag_ranks_first(self, rng):
        n = 200
        X = rng.normal(size=(n, 4))
        y = 3.0 * X[:, 1] + 0.3 * rng.normal(size=n)
        design = design_from(X, y, ("x_t", "inflacion_t-1", "z_t", "w_t"))
        forest = fit_forest(design, ForestParams(n_trees=50, max_depth=8, seed=1))
        assert impurity_importance(forest, design).ranked()[0][0] == "inflacion_t-1"

    def test_name_mismatch(self, rng):
        design = random_design(rng)
        forest = fit_forest(design, ForestParams(n_trees=2, max_depth=1))
        other = DesignMatrix(design.target, design.features, ("a", "b", "c", "d"),
                             design.months)
        with pytest.raises(DataError):
            impurity_importance(forest, other)

    def test_csv_sorted(self, tmp_path):
        rep = ImportanceReport(("a", "b", "c"), np.array([0.2, 0.5, 0.3]), np.zeros(3))
        rep.to_csv(tmp_path / "i.csv")
        lines = (tmp_path / "i.csv").read_text().splitlines()
        assert lines[0] == "feature,share"
        assert [l.split(",")[0] for l in lines[1:]] == ["b", "c", "a"]


class TestPdp1d:

    def test_depth_zero_is_flat_median(self, rng):
        design = random_design(rng, n=41)
        forest = fit_forest(design, ForestParams(n_trees=3, max_depth=0, bootstrap=False))
        pdp = pdp_1d(forest, design, "x0_t", grid=7)
        npt.assert_array_equal(pdp.response, np.median(design.target))

    @settings(max_examples=60, deadline=None)
    @given(st.integers(0, 10_000), st.floats(-2, 2), st.floats(-50, 50), st.floats(-50, 50))
    def test_stump_is_step(self, seed, thr, low, high):
        design = random_design(np.random.default_rng(seed), n=20, d=2)
        forest = forest_from_trees([Tree.stump(0, thr, low, high)], design.feature_names)
        grid = np.unique(np.concatenate([np.linspace(-3, 3, 13), [thr]]))
        pdp = pdp_1d(forest, design, "x0_t", grid)
        npt.assert_array_equal(pdp.response, np.where(grid <= thr, low, high))

    def test_stump_example(self, rng):
        design = random_design(rng, d=2)
        forest = forest_from_trees([Tree.stump(0, 2.5, 1.5, 10.5)], design.feature_names)
        pdp = pdp_1d(forest, design, "x0", [1.0, 2.5, 2.6, 4.0])
        npt.assert_array_equal(pdp.response, [1.5, 1.5, 10.5, 10.5])
        assert pdp.features == ("x0_t",)

    def test_single_point_is_mean_prediction(self, rng):
        design = random_design(rng, n=50)
        forest = fit_forest(design, ForestParams(n_trees=9, max_depth=4))
        X = design.features.copy()
        X[:, 1] = 0.37
        assert pdp_1d(forest, design, "x1_t", [0.37]).response[0] == \
            pytest.approx(forest.predict(X).mean(), abs=1e-12)

    def test_absent_feature_is_constant(self, rng):
        design = random_design(rng, n=50, d=3)
        trees = [Tree.stump(0, 0.0, -1.0, 1.0), Tree.stump(2, 0.5, 0.0, 3.0)]
        forest = forest_from_trees(trees, design.feature_names)
        pdp = pdp_1d(forest, design, "x1_t", 20)
        assert np.ptp(pdp.response) == 0.0

    def test_piecewise_constant_between_thresholds(self, rng):
        design = random_design(rng, n=60, d=2)
        forest = fit_forest(design, ForestParams(n_trees=7, max_depth=3))
        cuts = split_thresholds(forest, 0)
        edges = np.concatenate([[-10.0], cuts, [10.0]])
        for lo, hi in zip(edges[:-1], edges[1:]):
            grid = lo + (hi - lo) * np.array([0.1, 0.5, 0.9])
            resp = pdp_1d(forest, design, "x0_t", grid).response
            assert np.ptp(resp) == 0.0

    def test_default_grid_is_quantiles(self, rng):
        design = random_design(rng, n=80)
        forest = fit_forest(design, ForestParams(n_trees=3, max_depth=2))
        pdp = pdp_1d(forest, design, "x0_t")
        npt.assert_array_equal(pdp.grids[0], quantile_grid(design.features[:, 0], 50))
        assert pdp.grids[0].size == 50 and np.all(np.diff(pdp.grids[0]) > 0)
        assert np.all(np.isfinite(pdp.response))

    @pytest.mark.parametrize("grid, err", [([], ValueError), ([1.0, 1.0], ValueError),
                                           ([2.0, 1.0], ValueError)])
    def test_bad_grid(self, rng, grid, err):
        design = random_design(rng)
        forest = fit_forest(design, ForestParams(n_trees=2, max_depth=1))
        with pytest.raises(err):
            pdp_1d(forest, design, "x0_t", grid)

    def test_unknown_feature(self, rng):
        design = random_design(rng)
        forest = fit_forest(design, ForestParams(n_trees=2, max_depth=1))
        with pytest.raises(DataError):
            pdp_1d(forest, design, "nope", 5)

    def test_long_csv(self, tmp_path):
        PdpGrid(("a_t",), (np.array([1.0, 2.0]),), np.array([0.5, 0.7])).to_csv(tmp_path / "p.csv")
        assert (tmp_path / "p.csv").read_text().splitlines() == ["a_t,response", "1.0,0.5",
                                                                 "2.0,0.7"]


@pytest.mark.slow
def test_gap_slope_ratio_on_simulated_panels():
    ratios = []
    grid = np.arange(10.0, 91.0, 10.0)
    for seed in range(6):
        design = default_pipeline().design(generate_panel(SimConfig(seed=seed)))
        forest = fit_forest(design, ForestParams(n_trees=200, seed=seed), n_jobs=4)
        r = pdp_1d(forest, design, "brecha", grid).response
        below = (r[5] - r[0]) / 50.0
        above = (r[8] - r[5]) / 30.0
        ratios.append(above / below)
    assert 1.5 <= np.mean(ratios) <= 2.5


class TestPdp2d:

    def test_additive_forest(self, rng):
        design = random_design(rng, n=40, d=3)
        trees = [Tree.stump(0, 0.2, 1.0, 4.0), Tree.stump(2, -0.3, -2.0, 5.0)]
        forest = forest_from_trees(trees, design.feature_names, aggregation="mean")
        ga, gb = np.linspace(-2, 2, 9), np.linspace(-1.5, 1.5, 7)
        joint = pdp_2d(forest, design, "x0_t", "x2_t", (ga, gb)).response
        outer = pdp_1d(forest, design, "x0_t", ga).response[:, None] + \
            pdp_1d(forest, design, "x2_t", gb).response[None, :]
        diff = joint - outer
        npt.assert_allclose(diff, diff[0, 0], rtol=0, atol=1e-12)

    def test_constant_model(self, rng):
        design = random_design(rng)
        forest = forest_from_trees([Tree.leaf(2.0)], design.feature_names)
        pdp = pdp_2d(forest, design, "x0_t", "x1_t", (4, 5))
        assert pdp.response.shape == (pdp.grids[0].size, pdp.grids[1].size)
        assert np.all(pdp.response == 2.0)

    def test_indexing(self, rng):
        design = random_design(rng, n=30, d=2)
        forest = forest_from_trees([Tree.stump(0, 0.0, 0.0, 1.0)], design.feature_names)
        pdp = pdp_2d(forest, design, "x0_t", "x1_t", ([-1.0, 1.0], [0.0, 1.0, 2.0]))
        npt.assert_array_equal(pdp.response, [[0, 0, 0], [1, 1, 1]])

    def test_identical_features(self, rng):
        design = random_design(rng)
        forest = fit_forest(design, ForestParams(n_trees=2, max_depth=1))
        with pytest.raises(ValueError):
            pdp_2d(forest, design, "x0_t", "x0")

    def test_long_csv(self, tmp_path):
        pdp = PdpGrid(("a_t", "b_t"), (np.array([1.0, 2.0]), np.array([5.0])),
                      np.array([[0.1], [0.2]]))
        pdp.to_csv(tmp_path / "p.csv")
        assert (tmp_path / "p.csv").read_text().splitlines() == ["a_t,b_t,response",
                                                                 "1.0,5.0,0.1", "2.0,5.0,0.2"]


class TestHelpers:

    def test_largest_slope_increase(self):
        g = np.arange(0.0, 7.0)
        r = np.where(g <= 3, g, 3 + 3 * (g - 3))
        assert largest_slope_increase(PdpGrid(("x",), (g,), r)) == 3.0

    def test_largest_slope_increase_needs_points(self):
        with pytest.raises(ValueError):
            largest_slope_increase(PdpGrid(("x",), (np.array([0.0, 1.0]),), np.zeros(2)))

    def test_quantile_grid_dedupes(self):
        # quantiles at 0, .25, .5 all land on 1.0
        npt.assert_array_equal(quantile_grid([1.0, 1.0, 1.0, 2.0], 5), [1.0, 1.25, 2.0])
        assert quantile_grid(np.full(10, 3.0), 5).tolist() == [3.0]
