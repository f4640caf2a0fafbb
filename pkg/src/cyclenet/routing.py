"""Design-constrained low-stress shortest paths and accessibility.

Given a network design (selected projects and signalized nodes), each OD
pair routes on the traversable subnetwork by shortest travel time.  A
virtual dummy edge of time ``T2`` from origin to destination keeps every
routing problem feasible: unreachable destinations get travel time ``T2``
and hence zero accessibility.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import dijkstra

from .network import Network

TIME_TOL = 1e-9


@dataclass(frozen=True)
class ImpedanceSpec:
    """Piecewise-linear impedance: slope ``beta1`` on [0, T1), ``beta2`` on
    [T1, T2), and zero from ``T2`` on."""

    beta1: float
    beta2: float
    t1: float
    t2: float
    name: str = "custom"

    def __post_init__(self):
        if self.beta1 < 0 or self.beta2 < 0:
            raise ValueError("impedance slopes must be nonnegative")
        if not 0 <= self.t1 <= self.t2:
            raise ValueError("breakpoints must satisfy 0 <= T1 <= T2")

    @property
    def alpha1(self):
        return 1.0

    @property
    def alpha2(self):
        # Intercept of the second linear piece (continuity at T1).
        return 1.0 + (self.beta2 - self.beta1) * self.t1

    def __call__(self, tau):
        return accessibility(tau, self)


#: Presets mimicking negative-exponential, linear, and rectangular decay.
PRESETS = {
    "exp": ImpedanceSpec(0.0375, 0.00625, 20.0, 60.0, name="exp"),
    "lin": ImpedanceSpec(1.0 / 60.0, 0.0, 60.0, 60.0, name="lin"),
    "rec": ImpedanceSpec(0.001, 0.471, 58.0, 60.0, name="rec"),
}


def get_impedance(spec) -> ImpedanceSpec:
    if isinstance(spec, ImpedanceSpec):
        return spec
    try:
        return PRESETS[str(spec).lower()]
    except KeyError:
        raise ValueError(f"unknown impedance preset {spec!r}; choose from {sorted(PRESETS)}") from None


def accessibility(tau, impedance: ImpedanceSpec):
    """Impedance value g(tau) in [0, 1]; accepts scalars or arrays."""
    imp = get_impedance(impedance)
    t = np.asarray(tau, dtype=np.float64)
    if np.any(t < 0):
        raise ValueError("travel time must be nonnegative")
    mid = 1.0 - imp.beta1 * imp.t1 - imp.beta2 * (t - imp.t1)
    g = np.where(t < imp.t1, 1.0 - imp.beta1 * t, mid)
    g = np.where(t >= imp.t2, 0.0, g)
    g = np.clip(g, 0.0, 1.0)
    return float(g) if np.isscalar(tau) else g


@dataclass(frozen=True)
class Design:
    """Leader decision: selected projects and signalized high-stress nodes."""

    projects: frozenset[int] = frozenset()
    nodes: frozenset[int] = frozenset()
    edge_budget: float = float("inf")
    node_budget: float = float("inf")

    @staticmethod
    def of(projects=(), nodes=(), edge_budget=float("inf"), node_budget=float("inf")):
        return Design(frozenset(int(p) for p in projects), frozenset(int(v) for v in nodes),
                      float(edge_budget), float(node_budget))

    def project_cost(self, network: Network) -> float:
        return float(network.project_cost[sorted(self.projects)].sum()) if self.projects else 0.0

    def node_cost(self, network: Network) -> float:
        return float(sum(network.node_costs[v] for v in self.nodes))

    def is_feasible(self, network: Network, tol=1e-9) -> bool:
        return (
            self.project_cost(network) <= self.edge_budget + tol
            and self.node_cost(network) <= self.node_budget + tol
        )

    def with_project(self, pid):
        return Design(self.projects | {int(pid)}, self.nodes, self.edge_budget, self.node_budget)

    def without_project(self, pid):
        return Design(self.projects - {int(pid)}, self.nodes, self.edge_budget, self.node_budget)

    def to_json(self) -> str:
        return json.dumps(
            {
                "projects": sorted(self.projects),
                "nodes": sorted(self.nodes),
                "edge_budget": self.edge_budget,
                "node_budget": self.node_budget,
            },
            sort_keys=True,
        )

    @staticmethod
    def from_json(text: str) -> "Design":
        data = json.loads(text)
        return Design.of(
            data.get("projects", ()),
            data.get("nodes", ()),
            data.get("edge_budget", float("inf")),
            data.get("node_budget", float("inf")),
        )


def full_design(network: Network) -> Design:
    return Design.of(range(network.n_projects), network.high_stress_nodes)


def traversable(network: Network, design: Design) -> np.ndarray:
    """Boolean mask over edges that may carry flow under ``design``.

    An edge is traversable iff it is low-stress or its project is selected,
    and additionally, for a high-stress edge leaving a high-stress tail
    node i, either i is signalized or every high-stress edge incident to i
    is selected.  The node rule binds outgoing high-stress edges only,
    mirroring the routing constraints one-for-one (not symmetrized).
    """
    proj_sel = np.zeros(network.n_projects + 1, dtype=bool)
    if design.projects:
        proj_sel[sorted(design.projects)] = True
    # Sentinel slot so low-stress edges (project -1) index safely.
    mask = ~network.edge_high | proj_sel[network.edge_project]

    if network._crossing_nodes.size:
        cleared = np.logical_and.reduceat(
            proj_sel[network._crossing_flat], network._crossing_starts
        )
        blocked_tails = network._crossing_nodes[~cleared]
        if design.nodes:
            signalized = np.fromiter(design.nodes, dtype=np.int64, count=len(design.nodes))
            blocked_tails = np.setdiff1d(blocked_tails, signalized, assume_unique=False)
        if blocked_tails.size:
            blocked = np.zeros(network.n_nodes, dtype=bool)
            blocked[blocked_tails] = True
            mask &= ~(network.edge_high & blocked[network.tail])
    return mask


class TravelTimeEvaluator:
    """Batch shortest-time evaluator for a fixed network and impedance.

    Binds an OD subset at construction (default: all OD pairs) and
    precomputes graph indices, so evaluating many designs is cheap: one call
    builds the traversable subgraph and runs a multi-source Dijkstra from
    the subset's origins only.  All methods are pure given (network, design)
    and safe to fan out across workers; objective totals use numpy pairwise
    summation and are therefore reproducible regardless of OD order.
    """

    def __init__(self, network: Network, impedance="exp", od_ids=None):
        self.network = network
        self.impedance = get_impedance(impedance)
        n = network.n_nodes
        if od_ids is None:
            od_ids = np.arange(network.n_od_pairs, dtype=np.int64)
        self.od_ids = np.asarray(od_ids, dtype=np.int64)
        self._od_origin = network.od_origin[self.od_ids]
        self._od_destination = network.od_destination[self.od_ids]
        self.od_weight = network.od_weight[self.od_ids]
        self._origins, self._od_row = (
            np.unique(self._od_origin, return_inverse=True)
            if self.od_ids.size
            else (np.array([], dtype=np.int64), np.array([], dtype=np.int64))
        )
        # Parallel edges would be summed by CSR conversion; pre-group them so
        # each (tail, head) slot takes the minimum masked travel time, and
        # freeze the CSR sparsity pattern once: per design only the data
        # vector changes (blocked slots get +inf, which Dijkstra never uses).
        key = network.tail * n + network.head
        order = np.argsort(key, kind="stable")
        self._edge_order = order
        group_key, self._group_start = np.unique(key[order], return_index=True)
        rows = (group_key // n).astype(np.int32)
        self._cols = (group_key % n).astype(np.int32)
        self._indptr = np.zeros(n + 1, dtype=np.int32)
        np.add.at(self._indptr, rows + 1, 1)
        self._indptr = np.cumsum(self._indptr).astype(np.int32)
        self._sorted_times = network.travel_time[order]

    def _graph(self, design: Design):
        mask = traversable(self.network, design)[self._edge_order]
        times = np.where(mask, self._sorted_times, np.inf)
        data = np.minimum.reduceat(times, self._group_start)
        n = self.network.n_nodes
        return csr_matrix((data, self._cols, self._indptr), shape=(n, n))

    def times_from(self, design: Design, sources, limit=np.inf) -> np.ndarray:
        """Raw shortest times (no dummy-edge cap) from ``sources``; inf if
        unreachable.  ``limit`` prunes the search: entries beyond it come
        back as inf (safe whenever callers cap at or compare against it)."""
        sources = np.atleast_1d(np.asarray(sources, dtype=np.int64))
        if sources.size == 0:
            return np.zeros((0, self.network.n_nodes))
        return dijkstra(self._graph(design), directed=True, indices=sources, limit=limit)

    def od_times(self, design: Design) -> np.ndarray:
        """Travel times of the bound OD subset, capped at T2 by the dummy edge."""
        if self.od_ids.size == 0:
            return np.zeros(0)
        dist = self.times_from(design, self._origins, limit=self.impedance.t2)
        tau = dist[self._od_row, self._od_destination]
        return np.minimum(tau, self.impedance.t2)

    def od_accessibility(self, design: Design) -> np.ndarray:
        return accessibility(self.od_times(design), self.impedance)

    def objective(self, design: Design, weights=None) -> float:
        """Weighted total accessibility of the bound subset (default weights q)."""
        g = self.od_accessibility(design)
        w = self.od_weight if weights is None else np.asarray(weights, dtype=np.float64)
        return float(np.sum(w * g))


def follower_time(network: Network, design: Design, od, impedance="exp") -> float:
    """Travel time of one OD pair under a design, capped at T2.

    ``od`` is an OD id or an ODPair.  Equals the unconstrained shortest time
    whenever that time does not exceed T2 and the design selects everything.
    """
    imp = get_impedance(impedance)
    od_pair = network.od_pairs[od] if isinstance(od, (int, np.integer)) else od
    ev = TravelTimeEvaluator(network, imp, od_ids=[])
    dist = ev.times_from(design, [od_pair.origin])[0, od_pair.destination]
    return float(min(dist, imp.t2))


def exact_objective(network: Network, design: Design, od_ids=None, weights=None, impedance="exp") -> float:
    """Total weighted accessibility over ``od_ids`` (default all OD pairs)."""
    return TravelTimeEvaluator(network, impedance, od_ids).objective(design, weights)
