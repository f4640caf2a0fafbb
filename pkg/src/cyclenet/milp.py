"""Single-level MILP export in LP interchange format, plus solution import.

The exported model maximizes total weighted accessibility with budget,
flow-balance, and design-linking constraints.  The impedance is linearized
per OD pair: with ``beta1 <= beta2`` the function is concave in travel
time and one continuous variable with two upper envelopes suffices; with
``beta1 > beta2`` it is convex and a binary branch selector with two
interval variables is used.  Routing variables are generated only where a
full-network path through the edge could beat the dummy edge (flow
variable reduction).  The artifact never solves the MILP itself; solutions
come back through :func:`import_solution`.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .network import Network
from .objectives import ObjectiveSpec
from .routing import Design, TravelTimeEvaluator, full_design, get_impedance

CONCAVE = "concave"
CONVEX = "convex"


@dataclass
class ExportStats:
    encoding: str
    n_variables: int
    n_binary: int
    n_constraints: int
    variables: dict = field(default_factory=dict)
    constraints: dict = field(default_factory=dict)


def _fmt(value: float) -> str:
    return repr(round(float(value), 12))


def _expr(terms) -> str:
    """Render [(coef, name), ...] as an LP-format linear expression."""
    parts = []
    for coef, name in terms:
        if coef == 0:
            continue
        sign = "-" if coef < 0 else "+"
        parts.append(f"{sign} {_fmt(abs(coef))} {name}")
    if not parts:
        raise ValueError("empty linear expression")
    text = " ".join(parts)
    return text[2:] if text.startswith("+ ") else text


def _spec_ods_weights(network: Network, spec: ObjectiveSpec):
    q = network.od_weight
    if spec.variant == "exact":
        return np.arange(network.n_od_pairs, dtype=np.int64), q
    sample = spec.sample
    ids = sample.follower_ids
    if spec.reweight and q[ids].sum() > 0:
        return ids, q[ids] * (q.sum() / q[ids].sum())
    return ids, q[ids]


def export_milp(network: Network, spec: ObjectiveSpec, path, edge_budget=0.0,
                node_budget=0.0) -> ExportStats:
    """Write the single-level formulation for the exact or reduced variant.

    Returns the exported variable/constraint counts by kind so callers can
    sanity-check model size without parsing the file.
    """
    spec.validate()
    if spec.variant not in ("exact", "reduced"):
        raise ValueError("MILP export supports the exact and reduced variants only")
    imp = get_impedance(spec.impedance)
    encoding = CONCAVE if imp.beta1 <= imp.beta2 else CONVEX
    od_ids, weights = _spec_ods_weights(network, spec)

    # Flow variable reduction: keep edge (i, j) for an OD pair only if the
    # best possible o->i, edge, j->d full-network times beat the dummy edge.
    evaluator = TravelTimeEvaluator(network, imp, od_ids=[])
    built = full_design(network)
    origins = np.unique(network.od_origin[od_ids])
    dests = np.unique(network.od_destination[od_ids])
    dist_from = {int(o): evaluator.times_from(built, [o], limit=imp.t2)[0] for o in origins}
    reverse = _ReverseEvaluator(network)
    dist_to = {int(d): reverse.times_to(d) for d in dests}

    high_nodes = sorted(network.node_costs)
    obj_terms = []
    obj_constant = 0.0
    constraints = []  # (kind, name, expr, sense, rhs)
    bounds = []
    binaries = [f"xp{p.id}" for p in network.projects] + [f"zn{v}" for v in high_nodes]
    var_counts = {"xp": network.n_projects, "zn": len(high_nodes), "y": 0, "yd": 0}

    if network.n_projects:
        constraints.append(
            (
                "budget",
                "budget_edge",
                _expr([(network.project_cost[p.id], f"xp{p.id}") for p in network.projects]),
                "<=",
                edge_budget,
            )
        )
    if high_nodes:
        constraints.append(
            (
                "budget",
                "budget_node",
                _expr([(network.node_costs[v], f"zn{v}") for v in high_nodes]),
                "<=",
                node_budget,
            )
        )

    for row, od_id in enumerate(od_ids):
        od = network.od_pairs[int(od_id)]
        q = weights[row]
        dfo = dist_from[od.origin]
        dtd = dist_to[od.destination]
        kept = [
            e
            for e in range(network.n_edges)
            if dfo[network.tail[e]] + network.travel_time[e] + dtd[network.head[e]] < imp.t2
        ]
        tag = od.id
        yd = f"yd_{tag}"
        var_counts["yd"] += 1
        var_counts["y"] += len(kept)
        for e in kept:
            bounds.append(f"y_{tag}_{e} <= 1")
        bounds.append(f"{yd} <= 1")

        involved = {od.origin, od.destination}
        out_terms = {}
        in_terms = {}
        for e in kept:
            involved.add(int(network.tail[e]))
            involved.add(int(network.head[e]))
            out_terms.setdefault(int(network.tail[e]), []).append((1.0, f"y_{tag}_{e}"))
            in_terms.setdefault(int(network.head[e]), []).append((-1.0, f"y_{tag}_{e}"))
        out_terms.setdefault(od.origin, []).append((1.0, yd))
        in_terms.setdefault(od.destination, []).append((-1.0, yd))
        for node in sorted(involved):
            terms = out_terms.get(node, []) + in_terms.get(node, [])
            rhs = 1.0 if node == od.origin else (-1.0 if node == od.destination else 0.0)
            constraints.append(("flow", f"fb_{tag}_{node}", _expr(terms), "=", rhs))

        for e in kept:
            if not network.edge_high[e]:
                continue
            pid = int(network.edge_project[e])
            constraints.append(
                ("link", f"link_{tag}_{e}", _expr([(1.0, f"y_{tag}_{e}"), (-1.0, f"xp{pid}")]), "<=", 0.0)
            )
            tail = int(network.tail[e])
            if network.node_high[tail]:
                for inc_pid in network.node_incident_projects[tail]:
                    constraints.append(
                        (
                            "node",
                            f"node_{tag}_{e}_{inc_pid}",
                            _expr(
                                [
                                    (1.0, f"y_{tag}_{e}"),
                                    (-1.0, f"xp{int(inc_pid)}"),
                                    (-1.0, f"zn{tail}"),
                                ]
                            ),
                            "<=",
                            0.0,
                        )
                    )

        time_terms = [(network.travel_time[e], f"y_{tag}_{e}") for e in kept]
        time_terms.append((imp.t2, yd))
        if encoding == CONCAVE:
            v = f"v_{tag}"
            var_counts["v"] = var_counts.get("v", 0) + 1
            obj_terms.append((q, v))
            constraints.append(
                ("impedance", f"imp1_{tag}",
                 _expr([(1.0, v)] + [(imp.beta1 * c, n) for c, n in time_terms]), "<=", imp.alpha1)
            )
            constraints.append(
                ("impedance", f"imp2_{tag}",
                 _expr([(1.0, v)] + [(imp.beta2 * c, n) for c, n in time_terms]), "<=", imp.alpha2)
            )
        else:
            r, u1, u2 = f"r_{tag}", f"u1_{tag}", f"u2_{tag}"
            var_counts["r"] = var_counts.get("r", 0) + 1
            var_counts["u"] = var_counts.get("u", 0) + 2
            binaries.append(r)
            # g = alpha2 + (alpha1 - alpha2) r - beta1 u1 - beta2 u2 on both
            # branches (the branch selector carries the intercept switch).
            obj_constant += q * imp.alpha2
            obj_terms.append((q * (imp.alpha1 - imp.alpha2), r))
            obj_terms.append((-q * imp.beta1, u1))
            obj_terms.append((-q * imp.beta2, u2))
            constraints.append(
                ("impedance", f"impa_{tag}", _expr([(1.0, u1), (-imp.t1, r)]), "<=", 0.0)
            )
            constraints.append(
                ("impedance", f"impb_{tag}", _expr([(1.0, u2), (imp.t1, r)]), ">=", imp.t1)
            )
            constraints.append(
                ("impedance", f"impc_{tag}", _expr([(1.0, u2), (imp.t2, r)]), "<=", imp.t2)
            )
            constraints.append(
                ("impedance", f"impd_{tag}",
                 _expr([(1.0, u1), (1.0, u2)] + [(-c, n) for c, n in time_terms]), "=", 0.0)
            )

    lines = [
        f"\\ cyclenet export: instance={network.name} variant={spec.variant} "
        f"impedance={imp.name} encoding={encoding}",
        "Maximize",
    ]
    objective = _expr(obj_terms)
    if obj_constant:
        objective += f" + {_fmt(obj_constant)}"
    lines.append(f" obj: {objective}")
    lines.append("Subject To")
    for _, name, expr, sense, rhs in constraints:
        lines.append(f" {name}: {expr} {sense} {_fmt(rhs)}")
    lines.append("Bounds")
    lines.extend(f" {b}" for b in bounds)
    if binaries:
        lines.append("Binaries")
        for i in range(0, len(binaries), 10):
            lines.append(" " + " ".join(binaries[i : i + 10]))
    lines.append("End")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")

    kind_counts = {}
    for kind, *_ in constraints:
        kind_counts[kind] = kind_counts.get(kind, 0) + 1
    n_vars = sum(var_counts.values())
    return ExportStats(
        encoding=encoding,
        n_variables=n_vars,
        n_binary=len(binaries),
        n_constraints=len(constraints),
        variables=var_counts,
        constraints=kind_counts,
    )


class _ReverseEvaluator:
    """Shortest full-network times into a destination (transposed graph)."""

    def __init__(self, network: Network):
        from scipy.sparse import csr_matrix

        n = network.n_nodes
        self._graph = csr_matrix(
            (network.travel_time, (network.head, network.tail)), shape=(n, n)
        )

    def times_to(self, dest) -> np.ndarray:
        from scipy.sparse.csgraph import dijkstra

        return dijkstra(self._graph, directed=True, indices=[dest])[0]


def export_warm_start(network: Network, design: Design, path):
    """Write a solver warm-start file (one ``name value`` pair per line)."""
    lines = []
    for p in network.projects:
        lines.append(f"xp{p.id} {1 if p.id in design.projects else 0}")
    for v in sorted(network.node_costs):
        lines.append(f"zn{v} {1 if v in design.nodes else 0}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def import_solution(path, edge_budget=float("inf"), node_budget=float("inf")) -> Design:
    """Parse a solver solution (or warm-start) file back into a Design.

    Accepts the common ``name value`` per-line format; ``xp*``/``zn*``
    variables with value >= 0.5 are taken as selected.
    """
    projects, nodes = [], []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#") or line.startswith("\\"):
                continue
            parts = line.split()
            if len(parts) != 2:
                continue
            name, value = parts
            try:
                value = float(value)
            except ValueError:
                continue
            if value < 0.5:
                continue
            if name.startswith("xp"):
                projects.append(int(name[2:]))
            elif name.startswith("zn"):
                nodes.append(int(name[2:]))
    return Design.of(projects, nodes, edge_budget, node_budget)
