"""Master-problem objective variants.

Four objectives over a design, all in the maximize orientation:

* ``exact``    - weighted accessibility of every follower;
* ``reduced``  - sampled followers only, with re-weighted weights;
* ``knn``      - sampled followers weighted by their own weight plus the
  weight of the unsampled followers assigned to them (1/k each), which
  equals the double-sum form of the kNN-augmented objective;
* ``reg``      - sampled followers at their own weight plus a prediction
  term for unsampled followers from a linear model whose weighted L1
  training loss is constrained; the model fit is embedded as a small LP
  solved per evaluation.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .embedding import as_feature_matrix
from .network import Network
from .routing import Design, TravelTimeEvaluator, accessibility, get_impedance
from .sampling import Sample, assignment_weights
from .simplex import DenseLP, INFEASIBLE, UNBOUNDED, solve_lp
from .validation import check_vector

VARIANTS = ("exact", "reduced", "knn", "reg")


class InnerFitInfeasible(RuntimeError):
    """The embedded training-loss constraint cannot be met."""


@dataclass(frozen=True)
class ObjectiveSpec:
    """What to optimize: variant, impedance, and the sampled-follower data."""

    variant: str = "exact"
    impedance: object = "exp"
    sample: Sample | None = None
    features: object = None
    reweight: bool = True       # reduced: scale q_T by (sum_S q / sum_T q)
    q_weighted: bool = True     # reg: weight both terms by q (False: paper-literal)
    loss_budget: float = float("inf")   # reg: bound on weighted L1 training loss
    norm_bound: float = 1.0             # reg: bound on ||w||_1

    def validate(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown objective variant {self.variant!r}")
        if self.variant in ("reduced", "knn", "reg") and self.sample is None:
            raise ValueError(f"variant {self.variant!r} requires a follower sample")
        if self.variant == "reg":
            if self.features is None:
                raise ValueError("variant 'reg' requires follower features")
            if not self.loss_budget >= 0:
                raise ValueError("loss budget must be nonnegative")
            if not self.norm_bound > 0:
                raise ValueError("norm bound must be positive")
        return self

    def with_loss_budget(self, value):
        return replace(self, loss_budget=value)


def inner_fit(train_features, train_targets, multiplicities, objective_coef,
              loss_budget, norm_bound, tol=1e-9):
    """Fit w maximizing ``objective_coef @ w`` subject to the weighted L1
    training loss being at most ``loss_budget`` and ``||w||_1`` at most
    ``norm_bound``; solved as a dense LP.

    Returns ``(w, training_loss)``; raises :class:`InnerFitInfeasible` when
    the loss budget is below the best achievable constrained loss.
    """
    f = np.asarray(train_features, dtype=np.float64)
    g = check_vector(train_targets, "train_targets", n=f.shape[0])
    m = check_vector(multiplicities, "multiplicities", n=f.shape[0])
    c_out = check_vector(objective_coef, "objective_coef", n=f.shape[1])
    if loss_budget < 0:
        raise ValueError("loss budget must be nonnegative")
    if norm_bound <= 0:
        raise ValueError("norm bound must be positive")
    dim, n_t = f.shape[1], f.shape[0]

    if not np.isfinite(loss_budget):
        # Loss constraint inactive: put all norm mass on the best coordinate.
        j = int(np.argmax(np.abs(c_out)))
        w = np.zeros(dim)
        w[j] = norm_bound * np.sign(c_out[j]) if c_out[j] != 0 else 0.0
        return w, float(np.sum(m * np.abs(f @ w - g)))

    # Variables: [w+ (dim), w- (dim), r (n_t residual magnitudes)].
    n_var = 2 * dim + n_t
    c = np.zeros(n_var)
    c[:dim] = -c_out
    c[dim : 2 * dim] = c_out
    rows, rhs = [], []
    for t in range(n_t):
        row = np.zeros(n_var)
        row[:dim] = f[t]
        row[dim : 2 * dim] = -f[t]
        row[2 * dim + t] = -1.0
        rows.append(row)
        rhs.append(g[t])
        rows.append(-row.copy())
        rows[-1][2 * dim + t] = -1.0
        rhs.append(-g[t])
    loss_row = np.zeros(n_var)
    loss_row[2 * dim :] = m
    rows.append(loss_row)
    rhs.append(loss_budget)
    norm_row = np.zeros(n_var)
    norm_row[: 2 * dim] = 1.0
    rows.append(norm_row)
    rhs.append(norm_bound)

    result = solve_lp(DenseLP(c=c, a_ub=np.array(rows), b_ub=np.array(rhs)), tol=tol)
    if result.status == INFEASIBLE:
        raise InnerFitInfeasible(
            f"training-loss budget {loss_budget} is below the best achievable loss"
        )
    if result.status == UNBOUNDED:
        raise RuntimeError("inner fit LP unbounded; norm bound should prevent this")
    w = result.x[:dim] - result.x[dim : 2 * dim]
    return w, float(np.sum(m * np.abs(f @ w - g)))


class ObjectiveEvaluator:
    """Evaluates one objective variant for many designs on a fixed network.

    Pure function of (network, spec, design); shares nothing mutable, so
    instances can be used from parallel workers.
    """

    def __init__(self, network: Network, spec: ObjectiveSpec):
        spec.validate()
        self.network = network
        self.spec = spec
        self.impedance = get_impedance(spec.impedance)
        q = network.od_weight
        if spec.variant == "exact":
            self._evaluator = TravelTimeEvaluator(network, self.impedance)
            self._weights = q
        else:
            sample = spec.sample
            ids = sample.follower_ids
            self._evaluator = TravelTimeEvaluator(network, self.impedance, od_ids=ids)
            if spec.variant == "reduced":
                if spec.reweight and q[ids].sum() > 0:
                    self._weights = q[ids] * (q.sum() / q[ids].sum())
                else:
                    self._weights = q[ids]
            elif spec.variant == "knn":
                self._weights = assignment_weights(sample, q)
            else:  # reg
                self._weights = q[ids] if spec.q_weighted else np.ones(ids.size)
                values, _ = as_feature_matrix(spec.features)
                self._train_features = values[ids]
                self._mult = sample.multiplicities.astype(np.float64)
                out_ids = sample.unsampled_ids
                out_w = q[out_ids] if spec.q_weighted else np.ones(out_ids.size)
                self._out_coef = out_w @ values[out_ids] if out_ids.size else np.zeros(values.shape[1])
        self._exact_evaluator = None

    def value(self, design: Design) -> float:
        g = self._evaluator.od_accessibility(design)
        total = float(np.sum(self._weights * g))
        if self.spec.variant == "reg":
            w, _ = inner_fit(
                self._train_features, g, self._mult, self._out_coef,
                self.spec.loss_budget, self.spec.norm_bound,
            )
            total += float(self._out_coef @ w)
        return total

    def try_value(self, design: Design):
        """Like :meth:`value` but returns None when the inner fit is infeasible."""
        try:
            return self.value(design)
        except InnerFitInfeasible:
            return None

    def exact_value(self, design: Design) -> float:
        """Full-follower-set objective, regardless of variant."""
        if self._exact_evaluator is None:
            self._exact_evaluator = TravelTimeEvaluator(self.network, self.impedance)
        return self._exact_evaluator.objective(design)

    def per_od(self, design: Design):
        """(od_ids, travel time, accessibility, weight) for the bound subset."""
        tau = self._evaluator.od_times(design)
        return (
            self._evaluator.od_ids,
            tau,
            accessibility(tau, self.impedance),
            self._weights,
        )


def objective_value(spec: ObjectiveSpec, design: Design, network: Network) -> float:
    """One-shot evaluation of a design under the given objective variant."""
    return ObjectiveEvaluator(network, spec).value(design)
