"""Follower subset selection and assignment weights.

Three samplers produce a :class:`Sample`: uniform, vector-assignment
p-median (swap/alternation meta-heuristic), and greedy farthest-point
p-center.  Every follower outside the sample is assigned to its k nearest
sampled followers in feature space (Euclidean, ties broken by lower
follower id); the assignment multiplicities drive the augmented-model
weights and the gap bounds.

Unembedded followers (zero feature rows) are never selected into a sample
but are assigned by the same nearest-neighbor rule.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .embedding import as_feature_matrix
from .validation import check_vector


def d_f(f, f_prime) -> float:
    """Euclidean distance between two feature vectors."""
    a = check_vector(np.asarray(f, dtype=np.float64).ravel(), "f")
    b = check_vector(np.asarray(f_prime, dtype=np.float64).ravel(), "f_prime")
    if a.size != b.size:
        raise ValueError(f"feature dimension mismatch: {a.size} vs {b.size}")
    return float(np.sqrt(np.sum((a - b) ** 2)))


def _distances_to(values, member_ids):
    """Distance matrix from every follower (rows) to the members (columns)."""
    members = values[member_ids]
    sq = (
        np.sum(values**2, axis=1)[:, None]
        - 2.0 * values @ members.T
        + np.sum(members**2, axis=1)[None, :]
    )
    return np.sqrt(np.maximum(sq, 0.0))


@dataclass
class Sample:
    """Selected follower subset with its k-nearest assignment.

    ``follower_ids`` is sorted ascending.  ``assigned`` maps each id in
    ``unsampled_ids`` (ascending) to its k nearest sampled follower ids.
    ``multiplicities`` counts, per sampled follower, how many unsampled
    followers it serves; they sum to k * |unsampled|.
    """

    follower_ids: np.ndarray
    method: str
    k: int
    n_followers: int
    unsampled_ids: np.ndarray
    assigned: np.ndarray
    multiplicities: np.ndarray
    objective: float = float("nan")

    @property
    def p(self):
        return int(self.follower_ids.size)

    def position_of(self, ids):
        """Indices of ``ids`` within ``follower_ids`` (which is sorted)."""
        return np.searchsorted(self.follower_ids, np.asarray(ids, dtype=np.int64))

    def to_json(self) -> str:
        return json.dumps(
            {
                "method": self.method,
                "k": self.k,
                "n_followers": self.n_followers,
                "follower_ids": self.follower_ids.tolist(),
                "unsampled_ids": self.unsampled_ids.tolist(),
                "assigned": self.assigned.tolist(),
                "multiplicities": self.multiplicities.tolist(),
                "objective": None if np.isnan(self.objective) else self.objective,
            },
            sort_keys=True,
        )

    @staticmethod
    def from_json(text: str) -> "Sample":
        data = json.loads(text)
        obj = data.get("objective")
        k = int(data["k"])
        return Sample(
            follower_ids=np.asarray(data["follower_ids"], dtype=np.int64),
            method=data["method"],
            k=k,
            n_followers=int(data["n_followers"]),
            unsampled_ids=np.asarray(data["unsampled_ids"], dtype=np.int64),
            assigned=np.asarray(data["assigned"], dtype=np.int64).reshape(
                len(data["unsampled_ids"]), k
            ),
            multiplicities=np.asarray(data["multiplicities"], dtype=np.int64),
            objective=float("nan") if obj is None else float(obj),
        )


def knn_assignment(values, member_ids, k):
    """k nearest members for every non-member follower (ties: lower id)."""
    member_ids = np.sort(np.asarray(member_ids, dtype=np.int64))
    n = values.shape[0]
    outside = np.setdiff1d(np.arange(n, dtype=np.int64), member_ids)
    if outside.size == 0:
        return outside, np.zeros((0, k), dtype=np.int64), np.zeros(member_ids.size, dtype=np.int64)
    dist = _distances_to(values, member_ids)[outside]
    # Stable argsort over columns sorted by id implements the id tie-break.
    order = np.argsort(dist, axis=1, kind="stable")[:, :k]
    assigned = member_ids[order]
    multiplicities = np.zeros(member_ids.size, dtype=np.int64)
    np.add.at(multiplicities, order.ravel(), 1)
    return outside, assigned, multiplicities


def _finish_sample(values, member_ids, method, k, objective=float("nan")):
    member_ids = np.sort(np.asarray(member_ids, dtype=np.int64))
    outside, assigned, mult = knn_assignment(values, member_ids, k)
    return Sample(
        follower_ids=member_ids,
        method=method,
        k=int(k),
        n_followers=values.shape[0],
        unsampled_ids=outside,
        assigned=assigned,
        multiplicities=mult,
        objective=objective,
    )


def _selection_pool(features):
    values, unembedded = as_feature_matrix(features)
    pool = np.flatnonzero(~unembedded)
    if pool.size == 0:
        raise ValueError("no embeddable followers to sample from")
    return values, pool


def vap_objective(values, member_ids, k) -> float:
    """Vector-assignment p-median objective: total distance from each
    non-member to its k nearest members (unweighted)."""
    member_ids = np.asarray(member_ids, dtype=np.int64)
    dist = _distances_to(values, member_ids)
    ksmall = np.partition(dist, min(k, member_ids.size) - 1, axis=1)[:, :k]
    total = ksmall.sum(axis=1)
    total[member_ids] = 0.0
    return float(total.sum())


def uniform_sample(features, p, seed=0, k=1) -> Sample:
    """Uniform sample without replacement from the embeddable followers."""
    values, pool = _selection_pool(features)
    if not 1 <= p <= pool.size:
        raise ValueError(f"p must lie in [1, {pool.size}], got {p}")
    if not 1 <= k <= p:
        raise ValueError(f"k must lie in [1, {p}], got {k}")
    rng = np.random.default_rng(seed)
    ids = pool[rng.choice(pool.size, size=p, replace=False)]
    sample = _finish_sample(values, ids, "uni", k)
    sample.objective = vap_objective(values, sample.follower_ids, k)
    return sample


class _VapState:
    """Incremental evaluation state for the swap phase.

    Keeps the follower-to-member distance matrix; a swap replaces one
    column.  Objective = sum over non-member rows of the k smallest
    entries (k-smallest sums are tie-invariant)."""

    def __init__(self, values, member_ids, k):
        self.values = values
        self.k = k
        self.members = np.asarray(member_ids, dtype=np.int64).copy()
        self.dist = _distances_to(values, self.members)

    def objective(self, dist=None, members=None) -> float:
        dist = self.dist if dist is None else dist
        members = self.members if members is None else members
        ksmall = np.partition(dist, self.k - 1, axis=1)[:, : self.k]
        total = ksmall.sum(axis=1)
        total[members] = 0.0
        return float(total.sum())

    def swap_objective(self, col, new_id):
        trial = self.dist.copy()
        trial[:, col] = _distances_to(self.values, np.array([new_id]))[:, 0]
        members = self.members.copy()
        members[col] = new_id
        return self.objective(trial, members), trial, members

    def apply(self, dist, members):
        self.dist = dist
        self.members = members


def vap_median_sample(features, p, k=1, n_iteration=100, n_swap=200, seed=0) -> Sample:
    """Vector-assignment p-median sampling by swap/alternation search.

    Starts from a random sample and alternates ``n_iteration`` times
    between a phase of ``n_swap`` random single swaps and an alternation
    phase that re-centers each member as the 1-median of the followers it
    currently serves.  Moves are accepted only when they strictly lower the
    objective, so the accepted-objective trace never increases.
    """
    values, pool = _selection_pool(features)
    if not 1 <= p <= pool.size:
        raise ValueError(f"p must lie in [1, {pool.size}], got {p}")
    if not 1 <= k <= p:
        raise ValueError(f"k must lie in [1, {p}], got {k}")
    rng = np.random.default_rng(seed)
    state = _VapState(values, pool[rng.choice(pool.size, size=p, replace=False)], k)
    best = state.objective()
    trace = [best]

    pool_set = set(int(i) for i in pool)
    for _ in range(n_iteration):
        member_set = set(int(i) for i in state.members)
        outside_pool = np.array(sorted(pool_set - member_set), dtype=np.int64)
        if outside_pool.size == 0:
            break
        for _ in range(n_swap):
            col = int(rng.integers(p))
            cand = int(outside_pool[rng.integers(outside_pool.size)])
            if cand in member_set:
                continue
            obj, trial, members = state.swap_objective(col, cand)
            if obj < best - 1e-12:
                member_set.discard(int(state.members[col]))
                member_set.add(cand)
                outside_pool = np.array(sorted(pool_set - member_set), dtype=np.int64)
                state.apply(trial, members)
                best = obj
                trace.append(best)

        # Alternation: re-center each member on the followers it serves.
        order = np.argsort(state.dist, axis=1, kind="stable")[:, :k]
        served = [[] for _ in range(p)]
        member_rows = set(int(i) for i in state.members)
        for row in range(values.shape[0]):
            if row in member_rows:
                continue
            for col in order[row]:
                served[col].append(row)
        new_members = []
        used = set()
        for col in range(p):
            group = np.array([s for s in served[col] if s in pool_set], dtype=np.int64)
            if group.size == 0:
                choice = int(state.members[col])
            else:
                sub = _distances_to(values[group], np.arange(group.size))
                choice = int(group[int(np.argmin(sub.sum(axis=0)))])
            if choice in used:
                choice = int(state.members[col])
            # A member displaced by another center's choice falls back to itself;
            # collisions are only possible through the 1-median picks.
            if choice in used:
                continue
            used.add(choice)
            new_members.append(choice)
        if len(new_members) == p:
            candidate = np.array(sorted(new_members), dtype=np.int64)
            obj = vap_objective(values, candidate, k)
            if obj < best - 1e-12:
                state.apply(_distances_to(values, candidate), candidate)
                best = obj
                trace.append(best)

    sample = _finish_sample(values, state.members, "med", k, objective=best)
    sample.trace = trace
    return sample


def p_center_sample(features, p, n_repeat=200, seed=0, k=1) -> Sample:
    """Greedy farthest-point p-center sampling, best of ``n_repeat`` runs.

    Each run seeds with a random follower and repeatedly adds the follower
    farthest from the current sample (a 2-approximation of the p-center
    radius); the run with the smallest radius wins.
    """
    values, pool = _selection_pool(features)
    if not 1 <= p <= pool.size:
        raise ValueError(f"p must lie in [1, {pool.size}], got {p}")
    if not 1 <= k <= p:
        raise ValueError(f"k must lie in [1, {p}], got {k}")
    rng = np.random.default_rng(seed)
    best_ids, best_radius = None, np.inf
    n = values.shape[0]
    for _ in range(n_repeat):
        start = int(pool[rng.integers(pool.size)])
        selected = [start]
        mind = _distances_to(values, np.array([start]))[:, 0]
        in_sample = np.zeros(n, dtype=bool)
        in_sample[start] = True
        while len(selected) < p:
            cand = mind.copy()
            cand[in_sample] = -np.inf
            mask = np.full(n, -np.inf)
            mask[pool] = cand[pool]
            nxt = int(np.argmax(mask))
            selected.append(nxt)
            in_sample[nxt] = True
            mind = np.minimum(mind, _distances_to(values, np.array([nxt]))[:, 0])
        radius = float(mind[~in_sample].max()) if (~in_sample).any() else 0.0
        if radius < best_radius - 1e-15:
            best_radius = radius
            best_ids = selected
    return _finish_sample(values, best_ids, "cen", k, objective=best_radius)


SAMPLERS = {"uni": uniform_sample, "med": vap_median_sample, "cen": p_center_sample}


def make_sample(method: str, features, p, k=1, seed=0, **kwargs) -> Sample:
    try:
        sampler = SAMPLERS[method]
    except KeyError:
        raise ValueError(f"unknown sampling method {method!r}; choose from {sorted(SAMPLERS)}") from None
    return sampler(features, p, k=k, seed=seed, **kwargs)


def assignment_weights(sample: Sample, weights) -> np.ndarray:
    """Effective weight of each sampled follower in the kNN-augmented model:
    its own weight plus 1/k of the weight of every follower assigned to it."""
    q = check_vector(weights, "weights", n=sample.n_followers)
    r = q[sample.follower_ids].copy()
    if sample.unsampled_ids.size:
        positions = sample.position_of(sample.assigned.ravel())
        share = np.repeat(q[sample.unsampled_ids] / sample.k, sample.assigned.shape[1])
        np.add.at(r, positions, share)
    return r
