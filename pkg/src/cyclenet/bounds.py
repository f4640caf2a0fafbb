"""Computable optimality-gap bounds for the augmented models.

The bounds combine a prediction-bias term driven by feature-space
distances from each unsampled follower to its assigned sampled followers,
and a concentration term driven by the assignment multiplicities.  They
are gap magnitudes (minimization-form); orientation of the application
objective does not change them.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .embedding import as_feature_matrix
from .sampling import Sample
from .validation import check_nonnegative, check_probability


@dataclass(frozen=True)
class BoundParams:
    """Instance constants: cost smoothness ``mu``, model smoothness ``lam``,
    target interval width ``g_bar``, largest follower weight ``q_bar``, and
    confidence level ``gamma`` (bound holds with probability 1 - gamma)."""

    mu: float
    lam: float = 0.0
    g_bar: float = 1.0
    q_bar: float = 1.0
    gamma: float = 0.05

    def validate(self):
        check_nonnegative(self.mu, "mu")
        check_nonnegative(self.lam, "lam")
        check_nonnegative(self.g_bar, "g_bar")
        check_nonnegative(self.q_bar, "q_bar")
        check_probability(self.gamma, "gamma", open_interval=True)
        return self


@dataclass(frozen=True)
class BoundTerms:
    loss: float
    bias: float
    concentration: float

    @property
    def total(self):
        return self.loss + self.bias + self.concentration


def _assigned_distances(sample: Sample, features):
    values, _ = as_feature_matrix(features)
    if sample.unsampled_ids.size == 0:
        return np.zeros((0, sample.k))
    diff = values[sample.unsampled_ids][:, None, :] - values[sample.assigned]
    return np.sqrt(np.sum(diff**2, axis=2))


def concentration_term(multiplicities, k, n_unsampled, params: BoundParams) -> float:
    """sqrt(2 Q^2 G^2 [n_unsampled + sum_t (m_t / k)^2] log(1/gamma)).

    For fixed totals, the Cauchy-Schwarz inequality makes this smallest
    when the multiplicities are all equal."""
    m = np.asarray(multiplicities, dtype=np.float64)
    inner = n_unsampled + float(np.sum((m / k) ** 2))
    return float(
        np.sqrt(2.0 * params.q_bar**2 * params.g_bar**2 * inner * np.log(1.0 / params.gamma))
    )


def knn_bound(sample: Sample, features, params: BoundParams) -> BoundTerms:
    """Gap bound for the kNN-augmented model.

    bias = sum over unsampled s and its k assigned members t of
    (2 mu Q / k) d(f_s, f_t); concentration as above with the k-assignment
    multiplicities."""
    params.validate()
    dists = _assigned_distances(sample, features)
    bias = float(2.0 * params.mu * params.q_bar / sample.k * dists.sum())
    conc = concentration_term(sample.multiplicities, sample.k, sample.unsampled_ids.size, params)
    return BoundTerms(0.0, bias, conc)


def reg_bound(sample: Sample, features, loss_budget, params: BoundParams) -> BoundTerms:
    """Gap bound for the regression-augmented model (1-assignment).

    2 Q L + 2 Q (lam + mu) sum_s d(f_s, f_nearest(s)) + concentration with
    the nearest-neighbor multiplicities."""
    params.validate()
    check_nonnegative(loss_budget, "loss_budget")
    if sample.k != 1:
        raise ValueError("regression bound requires a k=1 (nearest-neighbor) assignment")
    dists = _assigned_distances(sample, features)
    loss = float(2.0 * params.q_bar * loss_budget)
    bias = float(2.0 * params.q_bar * (params.lam + params.mu) * dists.sum())
    conc = concentration_term(sample.multiplicities, 1, sample.unsampled_ids.size, params)
    return BoundTerms(loss, bias, conc)


def estimate_mu(features, costs, n_pairs=2000, seed=0) -> float:
    """Crude estimate of the cost-smoothness constant: the largest observed
    ratio |mean cost difference| / feature distance over random follower
    pairs.  An empirical report, not a certificate."""
    values, _ = as_feature_matrix(features)
    mean_cost = np.asarray(costs, dtype=np.float64).mean(axis=1)
    rng = np.random.default_rng(seed)
    n = values.shape[0]
    best = 0.0
    for _ in range(n_pairs):
        s, t = rng.integers(n, size=2)
        if s == t:
            continue
        d = float(np.sqrt(np.sum((values[s] - values[t]) ** 2)))
        if d > 1e-12:
            best = max(best, abs(mean_cost[s] - mean_cost[t]) / d)
    return best
