import numpy as np
import pytest

from cyclenet.models import (
    KnnRegressor,
    LassoRegression,
    LinearRegression,
    RidgeRegression,
    fit_linear,
    l1_loss,
    mean_absolute_error,
    tsp_features,
)
from cyclenet.routing import full_design

from oracles import design_times_oracle


class TestKnn:
    def test_k_equals_n_predicts_mean(self):
        x = np.array([[0.0], [1.0], [2.0], [3.0]])
        y = np.array([1.0, 2.0, 3.0, 6.0])
        model = KnnRegressor(k=4).fit(x, y)
        assert model.predict([[9.0], [-5.0]]) == pytest.approx([3.0, 3.0])

    def test_exact_match_k1(self):
        x = np.array([[0.0, 0.0], [1.0, 1.0]])
        y = np.array([0.4, 0.9])
        model = KnnRegressor(k=1).fit(x, y)
        assert model.predict([[1.0, 1.0]])[0] == 0.9

    def test_hand_case_k2(self):
        # targets 0, 1, 1 at distances 1, 2, 3 -> two nearest average 0.5
        x = np.array([[1.0], [2.0], [3.0]])
        y = np.array([0.0, 1.0, 1.0])
        model = KnnRegressor(k=2).fit(x, y)
        assert model.predict([[0.0]])[0] == pytest.approx(0.5)

    def test_order_permutation_invariant_without_ties(self):
        rng = np.random.default_rng(0)
        x = rng.normal(size=(12, 3))
        y = rng.normal(size=12)
        q = rng.normal(size=(5, 3))
        base = KnnRegressor(k=3).fit(x, y).predict(q)
        perm = rng.permutation(12)
        assert KnnRegressor(k=3).fit(x[perm], y[perm]).predict(q) == pytest.approx(base)

    def test_tie_broken_by_training_row_order(self):
        x = np.array([[1.0], [-1.0]])
        y = np.array([10.0, 20.0])
        model = KnnRegressor(k=1).fit(x, y)
        assert model.predict([[0.0]])[0] == 10.0

    def test_k_bounds_enforced(self):
        with pytest.raises(ValueError):
            KnnRegressor(k=0).fit([[1.0]], [1.0])
        with pytest.raises(ValueError):
            KnnRegressor(k=3).fit([[1.0], [2.0]], [1.0, 2.0])


class TestLinearFamilies:
    def test_ols_interpolates_exact_linear_data(self):
        rng = np.random.default_rng(1)
        x = rng.normal(size=(30, 4))
        w = np.array([0.5, -1.0, 2.0, 0.0])
        y = x @ w + 0.7
        model = fit_linear(x, y, "ols")
        assert mean_absolute_error(y, model.predict(x)) <= 1e-9

    def test_lasso_full_shrinkage_leaves_intercept(self):
        rng = np.random.default_rng(2)
        x = rng.normal(size=(25, 3))
        y = x @ np.array([1.0, -2.0, 0.5]) + 3.0
        model = fit_linear(x, y, "lasso", alpha=1e6)
        assert np.abs(model.coef_).max() <= 1e-12
        assert model.predict(x) == pytest.approx(np.full(25, y.mean()), abs=1e-6)

    def test_ridge_matches_closed_form_without_intercept(self):
        # 3-point one-dimensional data against (X'X + aI)^-1 X'y directly.
        x = np.array([[1.0], [2.0], [3.0]])
        y = np.array([1.0, 2.0, 2.0])
        alpha = 0.7
        expected = np.linalg.solve(x.T @ x + alpha * np.eye(1), x.T @ y)
        model = RidgeRegression(alpha=alpha, include_intercept=False).fit(x, y)
        assert model.coef_ == pytest.approx(expected, abs=1e-12)

    def test_ridge_training_loss_monotone_in_alpha(self):
        rng = np.random.default_rng(3)
        x = rng.normal(size=(20, 3))
        y = rng.normal(size=20)
        losses = []
        for alpha in (0.0, 0.1, 1.0, 10.0, 100.0):
            model = RidgeRegression(alpha=alpha).fit(x, y)
            losses.append(float(np.sum((y - model.predict(x)) ** 2)))
        assert all(a <= b + 1e-9 for a, b in zip(losses, losses[1:]))

    def test_lasso_matches_soft_threshold_single_feature(self):
        # For standardized single-feature data the lasso solution is the
        # soft-thresholded OLS coefficient.
        rng = np.random.default_rng(4)
        x = rng.normal(size=(200, 1))
        x = (x - x.mean()) / x.std()
        y = 1.4 * x[:, 0] + rng.normal(scale=0.1, size=200)
        y = y - y.mean()
        alpha = 0.3
        n = len(y)
        rho = float(x[:, 0] @ y) / n
        z = float(x[:, 0] @ x[:, 0]) / n
        expected = np.sign(rho) * max(abs(rho) - alpha, 0.0) / z
        model = LassoRegression(alpha=alpha, include_intercept=False).fit(x, y)
        assert model.coef_[0] == pytest.approx(expected, abs=1e-7)

    def test_unknown_family_rejected(self):
        with pytest.raises(ValueError):
            fit_linear([[1.0]], [1.0], "boosted")


class TestL1Loss:
    def test_perfect_fit_is_zero(self):
        x = np.array([[1.0], [2.0]])
        y = np.array([1.0, 2.0])
        model = LinearRegression().fit(x, y)
        assert l1_loss(model, x, y) == pytest.approx(0.0, abs=1e-10)

    def test_unit_multiplicities_match_plain_loss(self):
        rng = np.random.default_rng(5)
        x = rng.normal(size=(10, 2))
        y = rng.normal(size=10)
        model = RidgeRegression(alpha=5.0).fit(x, y)
        assert l1_loss(model, x, y, np.ones(10)) == pytest.approx(l1_loss(model, x, y))

    def test_loss_linear_in_multiplicities(self):
        rng = np.random.default_rng(6)
        x = rng.normal(size=(8, 2))
        y = rng.normal(size=8)
        m = rng.integers(1, 5, size=8).astype(float)
        model = RidgeRegression(alpha=2.0).fit(x, y)
        assert l1_loss(model, x, y, 2 * m) == pytest.approx(2 * l1_loss(model, x, y, m))


class TestTspFeatures:
    def test_nine_dimensions_normalized(self, small_grid):
        feats = tsp_features(small_grid)
        assert feats.dim == 9
        assert feats.n_followers == small_grid.n_od_pairs
        assert (feats.values >= 0).all() and (feats.values <= 1).all()
        assert not feats.unembedded.any()

    def test_swap_permutes_endpoint_coordinates(self, small_grid):
        feats = tsp_features(small_grid, normalize=False)
        pairs = {(od.origin, od.destination): od.id for od in small_grid.od_pairs}
        for od in small_grid.od_pairs[:40]:
            rev = pairs.get((od.destination, od.origin))
            if rev is None:
                continue
            f, g = feats.values[od.id], feats.values[rev]
            assert g[:2] == pytest.approx(f[2:4])
            assert g[2:4] == pytest.approx(f[:2])
            assert g[4] == pytest.approx(f[5])
            assert g[5] == pytest.approx(f[4])
            assert g[6] == pytest.approx(f[6])
            assert g[7] == pytest.approx(f[7])

    def test_degenerate_rectangle_area_zero(self, small_grid):
        feats = tsp_features(small_grid, normalize=False)
        # collinear endpoints give a zero-area bounding rectangle
        xy = small_grid.node_xy
        for od in small_grid.od_pairs:
            if xy[od.origin, 0] == xy[od.destination, 0]:
                assert feats.values[od.id, 7] == 0.0
                break

    def test_shortest_time_feature_matches_oracle(self, small_grid):
        feats = tsp_features(small_grid, normalize=False)
        built = full_design(small_grid)
        od = small_grid.od_pairs[3]
        oracle = design_times_oracle(small_grid, built, od.origin)[od.destination]
        assert feats.values[3, 8] == pytest.approx(oracle, abs=1e-9)
