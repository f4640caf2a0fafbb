import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from cyclenet.embedding import DesignCostEmbedding
from cyclenet.network import HIGH, LOW, Edge, GridParams, Network, Node, ODPair, Project, generate_synthetic


def build_network(nodes, edges, od_pairs=(), node_cost=1.0, name="fixture"):
    """Hand-built network helper: each high-stress edge becomes its own
    project unless a project id is given; high-stress nodes get a default
    signalization cost.

    nodes: list of (x, y, stress) or (x, y, stress, is_centroid)
    edges: list of (tail, head, time, stress) or (tail, head, time, stress, project)
    od_pairs: list of (origin, destination, weight)
    """
    node_objs = []
    for i, spec in enumerate(nodes):
        x, y, stress = spec[:3]
        centroid = bool(spec[3]) if len(spec) > 3 else False
        node_objs.append(Node(i, float(x), float(y), stress, centroid))
    edge_objs = []
    explicit_ids = {e[4] for e in edges if len(e) > 4 and e[4] is not None}
    next_auto = 0
    members = {}
    for i, spec in enumerate(edges):
        tail, head, time, stress = spec[:4]
        pid = None
        if stress == HIGH:
            if len(spec) > 4 and spec[4] is not None:
                pid = spec[4]
            else:
                while next_auto in explicit_ids or next_auto in members:
                    next_auto += 1
                pid = next_auto
        cost = float(time) if stress == HIGH else 0.0
        edge_objs.append(Edge(i, tail, head, float(time), stress, cost, pid))
        if pid is not None:
            members.setdefault(pid, []).append(i)
    projects = [
        Project(pid, tuple(eids), sum(edge_objs[e].cost for e in eids))
        for pid, eids in sorted(members.items())
    ]
    node_costs = {v.id: float(node_cost) for v in node_objs if v.stress == HIGH}
    ods = [ODPair(i, o, d, float(w)) for i, (o, d, w) in enumerate(od_pairs)]
    return Network(node_objs, edge_objs, node_costs, projects, ods, name=name)


@pytest.fixture(scope="session")
def grid6():
    """The default synthetic instance (paper-scale skeleton)."""
    return generate_synthetic(42)


@pytest.fixture(scope="session")
def small_grid():
    """Oracle-friendly instance: 3x3 arterial skeleton, 12 projects."""
    return generate_synthetic(7, GridParams(grid_size=2, n_centroids=20))


@pytest.fixture(scope="session")
def small_features(small_grid):
    embedder = DesignCostEmbedding(
        n_sim=80, dim=8, max_projects=6, max_nodes=4, n_walks=6, walk_length=10,
        epochs=3, seed=3, batch_size=2048,
    )
    return embedder.fit_transform(small_grid)


@pytest.fixture(scope="session")
def grid6_features(grid6):
    """Learned features for the 6x6 instance.

    Hyperparameters are a reduced-but-adequate version of the defaults,
    sized so the whole acceptance suite stays within its runtime budget
    while the features remain strongly predictive of accessibility."""
    embedder = DesignCostEmbedding(
        n_sim=400, dim=16, n_walks=25, walk_length=20, window=5, epochs=6,
        learning_rate=0.05, seed=11, batch_size=8192,
    )
    return embedder.fit_transform(grid6)
