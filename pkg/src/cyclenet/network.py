"""Instance data model, synthetic grid-network generator, and file round trip.

A network is a directed graph whose edges and nodes carry a binary stress
label.  High-stress edges are grouped into candidate construction projects;
high-stress nodes carry a signalization cost.  Demand is a set of weighted
origin-destination (OD) pairs between centroid nodes.  Networks are treated
as immutable after construction and are safe to share across workers.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .validation import check_positive

LOW = "low"
HIGH = "high"

_MAGIC = "cyclenet-instance"
_FORMAT_VERSION = "v1"


class InstanceError(ValueError):
    """Schema or referential-integrity violation in instance data."""


@dataclass(frozen=True)
class Node:
    id: int
    x: float
    y: float
    stress: str = LOW
    is_centroid: bool = False


@dataclass(frozen=True)
class Edge:
    id: int
    tail: int
    head: int
    travel_time: float
    stress: str = LOW
    cost: float = 0.0
    project: int | None = None


@dataclass(frozen=True)
class Project:
    id: int
    edge_ids: tuple[int, ...]
    cost: float


@dataclass(frozen=True)
class ODPair:
    id: int
    origin: int
    destination: int
    weight: float


@dataclass(frozen=True)
class GridParams:
    """Parameters of the synthetic grid recipe.

    ``grid_size`` counts grid *cells* per side: the arterial skeleton of a
    size-6 grid has 7x7 arterial intersections, 84 road segments (one
    project each), and 3 minor intersections per segment.
    """

    grid_size: int = 6
    minor_per_segment: int = 3
    signal_prob: float = 0.3
    n_centroids: int = 72
    connect_prob: float = 0.7
    time_range: tuple[float, float] = (1.0, 5.0)
    weight_range: tuple[float, float] = (1.0, 10.0)
    node_cost_range: tuple[float, float] = (1.0, 5.0)
    od_cutoff: float = 60.0
    cell_size: float = 12.0
    # Local roads meander: centroid connectors cost their Euclidean length
    # times this factor (at unit speed), so arterial corridors are the fast
    # paths and low-stress accessibility genuinely depends on the design.
    connector_detour: float = 2.0

    def validate(self):
        check_positive(self.grid_size, "grid_size")
        check_positive(self.cell_size, "cell_size")
        check_positive(self.od_cutoff, "od_cutoff")
        if self.minor_per_segment < 0:
            raise ValueError("minor_per_segment must be >= 0")
        if self.n_centroids < 0:
            raise ValueError("n_centroids must be >= 0")
        if not 0.0 <= self.signal_prob <= 1.0:
            raise ValueError("signal_prob must lie in [0, 1]")
        if not 0.0 <= self.connect_prob <= 1.0:
            raise ValueError("connect_prob must lie in [0, 1]")
        for name in ("time_range", "weight_range", "node_cost_range"):
            lo, hi = getattr(self, name)
            if lo <= 0 or hi < lo:
                raise ValueError(f"{name} must satisfy 0 < lo <= hi, got ({lo}, {hi})")
        check_positive(self.connector_detour, "connector_detour")


class Network:
    """Directed network instance with projects, node costs, and OD demand.

    Dense integer ids are required: nodes 0..n-1, edges 0..m-1.  Adjacency
    lists and flat numpy views are precomputed for the routing evaluators.
    """

    def __init__(self, nodes, edges, node_costs, projects, od_pairs, name="instance"):
        self.name = name
        self.nodes = list(nodes)
        self.edges = list(edges)
        self.node_costs = dict(node_costs)
        self.projects = list(projects)
        self.od_pairs = list(od_pairs)
        self._validate()
        self._build_arrays()

    # -- construction ------------------------------------------------------

    def _validate(self):
        n = len(self.nodes)
        for idx, node in enumerate(self.nodes):
            if node.id != idx:
                raise InstanceError(f"nodes[{idx}].id: ids must be dense 0..n-1, got {node.id}")
            if node.stress not in (LOW, HIGH):
                raise InstanceError(f"nodes[{idx}].stress: unknown label {node.stress!r}")
        project_ids = {p.id for p in self.projects}
        for idx, e in enumerate(self.edges):
            if e.id != idx:
                raise InstanceError(f"edges[{idx}].id: ids must be dense 0..m-1, got {e.id}")
            for endpoint in ("tail", "head"):
                v = getattr(e, endpoint)
                if not 0 <= v < n:
                    raise InstanceError(
                        f"edges[{idx}].{endpoint}: dangling edge endpoint {v}"
                    )
            if e.travel_time <= 0:
                raise InstanceError(f"edges[{idx}].travel_time: must be > 0")
            if e.cost < 0:
                raise InstanceError(f"edges[{idx}].cost: must be >= 0")
            if e.stress == HIGH:
                if e.project is None:
                    raise InstanceError(f"edges[{idx}].project: high-stress edge has no project")
                if e.project not in project_ids:
                    raise InstanceError(f"edges[{idx}].project: unknown project {e.project}")
            elif e.project is not None:
                raise InstanceError(f"edges[{idx}].project: low-stress edge assigned to a project")
        seen = set()
        for p in self.projects:
            if p.id in seen:
                raise InstanceError(f"projects[{p.id}]: duplicate project id")
            seen.add(p.id)
            member_cost = 0.0
            for eid in p.edge_ids:
                if not 0 <= eid < len(self.edges):
                    raise InstanceError(f"projects[{p.id}].edge_ids: unknown edge {eid}")
                edge = self.edges[eid]
                if edge.project != p.id:
                    raise InstanceError(
                        f"projects[{p.id}].edge_ids: edge {eid} belongs to project {edge.project}"
                    )
                member_cost += edge.cost
            if abs(member_cost - p.cost) > 1e-6:
                raise InstanceError(
                    f"projects[{p.id}].cost: {p.cost} != sum of member edge costs {member_cost}"
                )
        n_assigned = sum(1 for e in self.edges if e.project is not None)
        n_members = sum(len(p.edge_ids) for p in self.projects)
        if n_assigned != n_members:
            raise InstanceError("projects: high-stress edges must partition into projects")
        for node in self.nodes:
            if node.stress == HIGH and node.id not in self.node_costs:
                raise InstanceError(f"node_costs[{node.id}]: missing cost for high-stress node")
        for nid, cost in self.node_costs.items():
            if not 0 <= nid < n:
                raise InstanceError(f"node_costs[{nid}]: unknown node")
            if self.nodes[nid].stress != HIGH:
                raise InstanceError(f"node_costs[{nid}]: cost defined for low-stress node")
            if cost < 0:
                raise InstanceError(f"node_costs[{nid}]: must be >= 0")
        for idx, od in enumerate(self.od_pairs):
            if od.id != idx:
                raise InstanceError(f"od_pairs[{idx}].id: ids must be dense, got {od.id}")
            for endpoint in ("origin", "destination"):
                v = getattr(od, endpoint)
                if not 0 <= v < n:
                    raise InstanceError(f"od_pairs[{idx}].{endpoint}: unknown node {v}")
            if od.origin == od.destination:
                raise InstanceError(f"od_pairs[{idx}]: origin equals destination")
            if od.weight <= 0:
                raise InstanceError(f"od_pairs[{idx}].weight: must be > 0")
        if not self.od_pairs:
            warnings.warn(f"instance {self.name!r} has an empty OD-pair list", stacklevel=3)

    def _build_arrays(self):
        n, m = len(self.nodes), len(self.edges)
        self.tail = np.fromiter((e.tail for e in self.edges), dtype=np.int64, count=m)
        self.head = np.fromiter((e.head for e in self.edges), dtype=np.int64, count=m)
        self.travel_time = np.fromiter((e.travel_time for e in self.edges), dtype=np.float64, count=m)
        self.edge_high = np.fromiter((e.stress == HIGH for e in self.edges), dtype=bool, count=m)
        self.edge_project = np.fromiter(
            (-1 if e.project is None else e.project for e in self.edges), dtype=np.int64, count=m
        )
        self.node_high = np.fromiter((v.stress == HIGH for v in self.nodes), dtype=bool, count=n)
        self.node_xy = np.array([(v.x, v.y) for v in self.nodes], dtype=np.float64).reshape(n, 2)
        self.project_cost = np.zeros(len(self.projects), dtype=np.float64)
        for p in self.projects:
            self.project_cost[p.id] = p.cost
        self.node_cost = np.zeros(n, dtype=np.float64)
        for nid, cost in self.node_costs.items():
            self.node_cost[nid] = cost
        self.od_origin = np.fromiter((od.origin for od in self.od_pairs), dtype=np.int64)
        self.od_destination = np.fromiter((od.destination for od in self.od_pairs), dtype=np.int64)
        self.od_weight = np.fromiter((od.weight for od in self.od_pairs), dtype=np.float64)
        self.out_edges = [[] for _ in range(n)]
        self.in_edges = [[] for _ in range(n)]
        for e in self.edges:
            self.out_edges[e.tail].append(e.id)
            self.in_edges[e.head].append(e.id)
        # High-stress edges incident to each high-stress node, as project ids;
        # used by the node-crossing rule of the routing constraints.  Also
        # kept as flat arrays so the rule evaluates with one reduceat.
        self.node_incident_projects = {}
        for v in np.flatnonzero(self.node_high):
            eids = [e for e in self.out_edges[v] + self.in_edges[v] if self.edge_high[e]]
            self.node_incident_projects[int(v)] = np.unique(self.edge_project[eids])
        with_projects = [
            (v, projs) for v, projs in self.node_incident_projects.items() if projs.size
        ]
        self._crossing_nodes = np.array([v for v, _ in with_projects], dtype=np.int64)
        lengths = [len(projs) for _, projs in with_projects]
        self._crossing_starts = np.concatenate([[0], np.cumsum(lengths)[:-1]]).astype(np.int64) if lengths else np.zeros(0, dtype=np.int64)
        self._crossing_flat = (
            np.concatenate([projs for _, projs in with_projects])
            if with_projects
            else np.zeros(0, dtype=np.int64)
        )

    # -- basic queries -----------------------------------------------------

    @property
    def n_nodes(self):
        return len(self.nodes)

    @property
    def n_edges(self):
        return len(self.edges)

    @property
    def n_projects(self):
        return len(self.projects)

    @property
    def n_od_pairs(self):
        return len(self.od_pairs)

    @property
    def high_stress_nodes(self):
        return [v.id for v in self.nodes if v.stress == HIGH]

    @property
    def centroids(self):
        return [v.id for v in self.nodes if v.is_centroid]

    def __eq__(self, other):
        if not isinstance(other, Network):
            return NotImplemented
        return (
            self.nodes == other.nodes
            and self.edges == other.edges
            and self.node_costs == other.node_costs
            and self.projects == other.projects
            and self.od_pairs == other.od_pairs
        )

    def __repr__(self):
        return (
            f"Network({self.name!r}: {self.n_nodes} nodes, {self.n_edges} edges, "
            f"{self.n_projects} projects, {self.n_od_pairs} OD pairs)"
        )


# -- synthetic generator ---------------------------------------------------


def generate_synthetic(seed: int, params: GridParams = GridParams()) -> Network:
    """Generate a synthetic grid instance.

    The arterial skeleton is deterministic given ``params``: a
    ``grid_size x grid_size`` grid of cells whose boundary roads are
    high-stress arterials, with signalized (low-stress) arterial-arterial
    intersections and ``minor_per_segment`` minor intersections per segment.
    Minor intersections are signalized with probability ``signal_prob``.
    All roads are bidirectional; each direction draws an independent travel
    time from ``time_range`` (rounded to 3 decimals) which doubles as its
    construction cost at unit speed.  The arterial edges of one segment form
    one project.  Centroids are spread evenly over cells at uniform positions
    and connect via low-stress edges to each minor intersection on their cell
    boundary with probability ``connect_prob``.  OD pairs are all ordered
    centroid pairs whose full-network shortest travel time is below
    ``od_cutoff``, weighted uniformly from ``weight_range``.

    The result is a pure function of ``(seed, params)``.
    """
    params.validate()
    rng = np.random.default_rng(seed)
    g = params.grid_size
    cell = params.cell_size
    k = params.minor_per_segment

    def tt():
        lo, hi = params.time_range
        return round(float(rng.uniform(lo, hi)), 3)

    nodes = []

    def add_node(x, y, stress, centroid=False):
        node = Node(len(nodes), round(float(x), 3), round(float(y), 3), stress, centroid)
        nodes.append(node)
        return node.id

    corner = {}
    for gx in range(g + 1):
        for gy in range(g + 1):
            corner[gx, gy] = add_node(gx * cell, gy * cell, LOW)

    # Segments between adjacent arterial intersections; horizontal sweep
    # first, then vertical, each carrying `k` minor intersections.
    segments = []
    for gy in range(g + 1):
        for gx in range(g):
            segments.append((corner[gx, gy], corner[gx + 1, gy]))
    for gx in range(g + 1):
        for gy in range(g):
            segments.append((corner[gx, gy], corner[gx, gy + 1]))

    seg_chain = []
    seg_minors = []
    for a, b in segments:
        ax, ay = nodes[a].x, nodes[a].y
        bx, by = nodes[b].x, nodes[b].y
        minors = []
        for j in range(1, k + 1):
            t = j / (k + 1)
            stress = LOW if rng.random() < params.signal_prob else HIGH
            minors.append(add_node(ax + t * (bx - ax), ay + t * (by - ay), stress))
        seg_chain.append([a] + minors + [b])
        seg_minors.append(minors)

    edges = []
    projects = []

    def add_edge(tail, head, time, stress, project):
        cost = time if stress == HIGH else 0.0
        edges.append(Edge(len(edges), tail, head, time, stress, cost, project))
        return edges[-1].id

    for pid, chain in enumerate(seg_chain):
        member_ids = []
        for a, b in zip(chain, chain[1:]):
            member_ids.append(add_edge(a, b, tt(), HIGH, pid))
            member_ids.append(add_edge(b, a, tt(), HIGH, pid))
        cost = sum(edges[eid].cost for eid in member_ids)
        projects.append(Project(pid, tuple(member_ids), cost))

    # Centroids: distribute evenly over cells (remainder cells drawn at
    # random), at uniform positions strictly inside the cell.
    n_cells = g * g
    counts = np.full(n_cells, params.n_centroids // n_cells if n_cells else 0, dtype=int)
    remainder = params.n_centroids - int(counts.sum())
    if remainder > 0:
        extra = rng.choice(n_cells, size=remainder, replace=remainder > n_cells)
        np.add.at(counts, extra, 1)

    # Boundary segments of cell (cx, cy): horizontal rows gy=cy and gy=cy+1,
    # vertical columns gx=cx and gx=cx+1.  Indices follow the sweep above.
    def boundary_segments(cx, cy):
        horiz = lambda gx, gy: gy * g + gx
        vert = lambda gx, gy: (g + 1) * g + gx * g + gy
        return [horiz(cx, cy), horiz(cx, cy + 1), vert(cx, cy), vert(cx + 1, cy)]

    centroid_ids = []
    for cx in range(g):
        for cy in range(g):
            for _ in range(int(counts[cx * g + cy])):
                x = rng.uniform(cx * cell, (cx + 1) * cell)
                y = rng.uniform(cy * cell, (cy + 1) * cell)
                cid = add_node(x, y, LOW, centroid=True)
                centroid_ids.append(cid)
                for sid in boundary_segments(cx, cy):
                    for minor in seg_minors[sid]:
                        if rng.random() < params.connect_prob:
                            length = float(
                                np.hypot(nodes[cid].x - nodes[minor].x, nodes[cid].y - nodes[minor].y)
                            )
                            t = round(max(params.connector_detour * length, 0.001), 3)
                            add_edge(cid, minor, t, LOW, None)
                            add_edge(minor, cid, t, LOW, None)

    node_costs = {}
    lo, hi = params.node_cost_range
    for node in nodes:
        if node.stress == HIGH:
            node_costs[node.id] = round(float(rng.uniform(lo, hi)), 3)

    od_pairs = []
    if centroid_ids:
        dist = _full_network_times(nodes, edges, centroid_ids)
        for i, o in enumerate(centroid_ids):
            for d in centroid_ids:
                if d != o and dist[i, d] < params.od_cutoff:
                    w = round(float(rng.uniform(*params.weight_range)), 3)
                    od_pairs.append(ODPair(len(od_pairs), o, d, w))

    name = f"grid{g}-s{seed}"
    return Network(nodes, edges, node_costs, projects, od_pairs, name=name)


def _full_network_times(nodes, edges, sources):
    """Shortest travel times from ``sources`` with every edge traversable."""
    from scipy.sparse import csr_matrix
    from scipy.sparse.csgraph import dijkstra

    n = len(nodes)
    tails = np.array([e.tail for e in edges], dtype=np.int64)
    heads = np.array([e.head for e in edges], dtype=np.int64)
    times = np.array([e.travel_time for e in edges], dtype=np.float64)
    graph = csr_matrix((times, (tails, heads)), shape=(n, n))
    # csr summation of parallel edges is irrelevant for the generator (no
    # parallel edges are produced) but guard anyway via explicit minimum.
    key = tails * n + heads
    if len(np.unique(key)) != len(key):
        order = np.argsort(key, kind="stable")
        uniq, first = np.unique(key[order], return_index=True)
        best = np.minimum.reduceat(times[order], first)
        graph = csr_matrix((best, (uniq // n, uniq % n)), shape=(n, n))
    return dijkstra(graph, directed=True, indices=sources)


# -- persistence -----------------------------------------------------------


def save_instance(network: Network, path):
    """Write a network to the sectioned text format (stable, diffable)."""
    lines = [f"{_MAGIC} {_FORMAT_VERSION}", f"name {network.name}"]
    lines.append(f"section nodes {network.n_nodes}")
    lines.append("# id x y stress centroid")
    for v in network.nodes:
        lines.append(f"{v.id} {v.x!r} {v.y!r} {v.stress} {int(v.is_centroid)}")
    lines.append(f"section edges {network.n_edges}")
    lines.append("# id tail head travel_time stress cost project")
    for e in network.edges:
        proj = -1 if e.project is None else e.project
        lines.append(
            f"{e.id} {e.tail} {e.head} {e.travel_time!r} {e.stress} {e.cost!r} {proj}"
        )
    lines.append(f"section node_costs {len(network.node_costs)}")
    lines.append("# node cost")
    for nid in sorted(network.node_costs):
        lines.append(f"{nid} {network.node_costs[nid]!r}")
    lines.append(f"section projects {network.n_projects}")
    lines.append("# id cost edge_ids")
    for p in network.projects:
        members = ",".join(str(eid) for eid in p.edge_ids)
        lines.append(f"{p.id} {p.cost!r} {members}")
    lines.append(f"section od_pairs {network.n_od_pairs}")
    lines.append("# id origin destination weight")
    for od in network.od_pairs:
        lines.append(f"{od.id} {od.origin} {od.destination} {od.weight!r}")
    lines.append("end")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def load_instance(path) -> Network:
    """Read a network written by :func:`save_instance`."""
    with open(path, "r", encoding="utf-8") as fh:
        raw = [line.rstrip("\n") for line in fh]
    lines = [(i + 1, s) for i, s in enumerate(raw) if s.strip() and not s.lstrip().startswith("#")]
    if not lines or not lines[0][1].startswith(_MAGIC):
        raise InstanceError(f"{path}: not a {_MAGIC} file")
    header = lines[0][1].split()
    if len(header) != 2 or header[1] != _FORMAT_VERSION:
        raise InstanceError(f"{path}: unsupported format version {header[1:]}")
    pos = 1
    name = "instance"
    if pos < len(lines) and lines[pos][1].startswith("name "):
        name = lines[pos][1][5:].strip()
        pos += 1

    def expect_section(expected):
        nonlocal pos
        lineno, text = lines[pos]
        parts = text.split()
        if len(parts) != 3 or parts[0] != "section" or parts[1] != expected:
            raise InstanceError(f"{path}:{lineno}: expected 'section {expected} <count>'")
        pos += 1
        try:
            return int(parts[2])
        except ValueError:
            raise InstanceError(f"{path}:{lineno}: bad count {parts[2]!r}") from None

    def rows(section, count, n_fields):
        nonlocal pos
        out = []
        for i in range(count):
            if pos >= len(lines):
                raise InstanceError(f"{path}: truncated {section} section")
            lineno, text = lines[pos]
            parts = text.split()
            if len(parts) != n_fields:
                raise InstanceError(
                    f"{path}:{lineno}: {section}[{i}]: expected {n_fields} fields, got {len(parts)}"
                )
            out.append((lineno, i, parts))
            pos += 1
        return out

    def parse(section, i, lineno, field_name, value, kind):
        try:
            return kind(value)
        except ValueError:
            raise InstanceError(
                f"{path}:{lineno}: {section}[{i}].{field_name}: cannot parse {value!r}"
            ) from None

    nodes = []
    for lineno, i, parts in rows("nodes", expect_section("nodes"), 5):
        nodes.append(
            Node(
                parse("nodes", i, lineno, "id", parts[0], int),
                parse("nodes", i, lineno, "x", parts[1], float),
                parse("nodes", i, lineno, "y", parts[2], float),
                parts[3],
                bool(parse("nodes", i, lineno, "centroid", parts[4], int)),
            )
        )
    edges = []
    for lineno, i, parts in rows("edges", expect_section("edges"), 7):
        proj = parse("edges", i, lineno, "project", parts[6], int)
        edges.append(
            Edge(
                parse("edges", i, lineno, "id", parts[0], int),
                parse("edges", i, lineno, "tail", parts[1], int),
                parse("edges", i, lineno, "head", parts[2], int),
                parse("edges", i, lineno, "travel_time", parts[3], float),
                parts[4],
                parse("edges", i, lineno, "cost", parts[5], float),
                None if proj < 0 else proj,
            )
        )
    node_costs = {}
    for lineno, i, parts in rows("node_costs", expect_section("node_costs"), 2):
        node_costs[parse("node_costs", i, lineno, "node", parts[0], int)] = parse(
            "node_costs", i, lineno, "cost", parts[1], float
        )
    projects = []
    for lineno, i, parts in rows("projects", expect_section("projects"), 3):
        members = tuple(
            parse("projects", i, lineno, "edge_ids", tok, int)
            for tok in parts[2].split(",")
            if tok
        )
        projects.append(
            Project(
                parse("projects", i, lineno, "id", parts[0], int),
                members,
                parse("projects", i, lineno, "cost", parts[1], float),
            )
        )
    od_pairs = []
    for lineno, i, parts in rows("od_pairs", expect_section("od_pairs"), 4):
        od_pairs.append(
            ODPair(
                parse("od_pairs", i, lineno, "id", parts[0], int),
                parse("od_pairs", i, lineno, "origin", parts[1], int),
                parse("od_pairs", i, lineno, "destination", parts[2], int),
                parse("od_pairs", i, lineno, "weight", parts[3], float),
            )
        )
    if pos >= len(lines) or lines[pos][1].strip() != "end":
        raise InstanceError(f"{path}: missing 'end' marker")
    return Network(nodes, edges, node_costs, projects, od_pairs, name=name)
