"""Prediction models over follower features, plus baseline geometric features.

The estimators follow the scikit-learn protocol (``fit`` returns self,
fitted state in trailing-underscore attributes, ``get_params``) so they can
be dropped into sklearn pipelines and grid-search tooling, but carry the
deterministic tie-breaking the sampling and augmented models rely on.
"""

from __future__ import annotations

import numpy as np

from .embedding import FollowerFeatures
from .network import Network
from .routing import TravelTimeEvaluator, full_design
from .validation import ParamsMixin, check_array_2d, check_fitted, check_vector


class KnnRegressor(ParamsMixin):
    """k-nearest-neighbor regression: predict the mean target of the k
    nearest training points (Euclidean; ties broken by training row order)."""

    def __init__(self, k=1):
        self.k = k
        self.x_ = None

    def fit(self, x, y):
        x = check_array_2d(x, "x")
        y = check_vector(y, "y", n=x.shape[0])
        if not 1 <= self.k <= x.shape[0]:
            raise ValueError(f"k must lie in [1, {x.shape[0]}], got {self.k}")
        self.x_ = x
        self.y_ = y
        return self

    def predict(self, x):
        check_fitted(self, "x_")
        x = check_array_2d(x, "x", n_cols=self.x_.shape[1])
        sq = (
            np.sum(x**2, axis=1)[:, None]
            - 2.0 * x @ self.x_.T
            + np.sum(self.x_**2, axis=1)[None, :]
        )
        order = np.argsort(np.sqrt(np.maximum(sq, 0.0)), axis=1, kind="stable")
        return self.y_[order[:, : self.k]].mean(axis=1)


class LinearRegression(ParamsMixin):
    """Ordinary least squares via the pseudo-inverse (rank-deficiency safe)."""

    def __init__(self, include_intercept=True):
        self.include_intercept = include_intercept
        self.coef_ = None

    def _design(self, x):
        return np.hstack([x, np.ones((x.shape[0], 1))]) if self.include_intercept else x

    def fit(self, x, y):
        x = check_array_2d(x, "x")
        y = check_vector(y, "y", n=x.shape[0])
        beta = np.linalg.pinv(self._design(x)) @ y
        if self.include_intercept:
            self.coef_, self.intercept_ = beta[:-1], float(beta[-1])
        else:
            self.coef_, self.intercept_ = beta, 0.0
        return self

    def predict(self, x):
        check_fitted(self, "coef_")
        x = check_array_2d(x, "x", n_cols=self.coef_.size)
        return x @ self.coef_ + self.intercept_


class RidgeRegression(LinearRegression):
    """L2-penalized least squares, closed form: minimizes
    ||y - Xw - b||^2 + alpha ||w||^2 with the intercept unpenalized."""

    def __init__(self, alpha=1.0, include_intercept=True):
        super().__init__(include_intercept)
        self.alpha = alpha

    def fit(self, x, y):
        x = check_array_2d(x, "x")
        y = check_vector(y, "y", n=x.shape[0])
        a = self._design(x)
        penalty = np.eye(a.shape[1]) * self.alpha
        if self.include_intercept:
            penalty[-1, -1] = 0.0
        beta = np.linalg.solve(a.T @ a + penalty, a.T @ y)
        if self.include_intercept:
            self.coef_, self.intercept_ = beta[:-1], float(beta[-1])
        else:
            self.coef_, self.intercept_ = beta, 0.0
        return self


class LassoRegression(LinearRegression):
    """L1-penalized least squares by cyclic coordinate descent: minimizes
    ||y - Xw - b||^2 / (2n) + alpha ||w||_1 with the intercept unpenalized."""

    def __init__(self, alpha=1.0, include_intercept=True, tol=1e-8, max_iter=10000):
        super().__init__(include_intercept)
        self.alpha = alpha
        self.tol = tol
        self.max_iter = max_iter

    def fit(self, x, y):
        x = check_array_2d(x, "x")
        y = check_vector(y, "y", n=x.shape[0])
        n, d = x.shape
        w = np.zeros(d)
        b = float(y.mean()) if self.include_intercept else 0.0
        col_sq = np.sum(x**2, axis=0) / n
        residual = y - b
        for _ in range(self.max_iter):
            max_delta = 0.0
            for j in range(d):
                if col_sq[j] == 0.0:
                    continue
                rho = (x[:, j] @ residual) / n + col_sq[j] * w[j]
                new = np.sign(rho) * max(abs(rho) - self.alpha, 0.0) / col_sq[j]
                if new != w[j]:
                    residual -= x[:, j] * (new - w[j])
                    max_delta = max(max_delta, abs(new - w[j]))
                    w[j] = new
            if self.include_intercept:
                shift = float(residual.mean())
                if shift != 0.0:
                    b += shift
                    residual -= shift
                    max_delta = max(max_delta, abs(shift))
            if max_delta <= self.tol:
                break
        self.coef_, self.intercept_ = w, b
        return self


FAMILIES = {
    "knn": KnnRegressor,
    "ols": LinearRegression,
    "lasso": LassoRegression,
    "ridge": RidgeRegression,
}


def fit_linear(x, y, family="ols", alpha=0.0, include_intercept=True):
    """Fit one of the linear families (ols, lasso, ridge) and return the model."""
    if family == "ols":
        model = LinearRegression(include_intercept)
    elif family == "lasso":
        model = LassoRegression(alpha, include_intercept)
    elif family == "ridge":
        model = RidgeRegression(alpha, include_intercept)
    else:
        raise ValueError(f"unknown linear family {family!r}")
    return model.fit(x, y)


def l1_loss(model, x, y, multiplicities=None) -> float:
    """Weighted L1 training loss: sum_t m_t |prediction_t - target_t|."""
    y = check_vector(y, "y")
    err = np.abs(model.predict(x) - y)
    if multiplicities is None:
        return float(err.sum())
    m = check_vector(multiplicities, "multiplicities", n=y.size)
    return float(np.sum(m * err))


def mean_absolute_error(y_true, y_pred) -> float:
    return float(np.mean(np.abs(np.asarray(y_true) - np.asarray(y_pred))))


def tsp_features(network: Network, normalize: bool = True) -> FollowerFeatures:
    """Nine geometric baseline features per OD pair.

    Origin/destination coordinates, distances of each endpoint to the grid
    center, endpoint separation, bounding-rectangle area, and the shortest
    travel time on the full network (all edges traversable).  Min-max
    normalized per dimension unless ``normalize`` is False.
    """
    xy = network.node_xy
    center = (xy.min(axis=0) + xy.max(axis=0)) / 2.0
    origins = network.od_origin
    dests = network.od_destination
    o_xy = xy[origins]
    d_xy = xy[dests]

    evaluator = TravelTimeEvaluator(network, "exp", od_ids=[])
    sources = np.unique(origins)
    dist = evaluator.times_from(full_design(network), sources)
    row = {int(s): i for i, s in enumerate(sources)}
    times = np.array([dist[row[int(o)], d] for o, d in zip(origins, dests)])
    finite = np.isfinite(times)
    if not finite.all():
        times[~finite] = times[finite].max() if finite.any() else 0.0

    feats = np.column_stack(
        [
            o_xy[:, 0],
            o_xy[:, 1],
            d_xy[:, 0],
            d_xy[:, 1],
            np.hypot(*(o_xy - center).T),
            np.hypot(*(d_xy - center).T),
            np.hypot(*(o_xy - d_xy).T),
            np.abs(o_xy[:, 0] - d_xy[:, 0]) * np.abs(o_xy[:, 1] - d_xy[:, 1]),
            times,
        ]
    )
    fmin = feats.min(axis=0) if len(feats) else np.zeros(9)
    fmax = feats.max(axis=0) if len(feats) else np.zeros(9)
    if normalize and len(feats):
        span = np.where(fmax > fmin, fmax - fmin, 1.0)
        feats = (feats - fmin) / span
    return FollowerFeatures(feats, np.zeros(len(feats), dtype=bool), fmin, fmax)
