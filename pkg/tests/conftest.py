import numpy as np
import pytest

from hypersample import Hypergraph, expand


def make_hypergraph(num_nodes, hyperedges, feature_dim=3, num_classes=2, seed=0):
    rng = np.random.default_rng(seed)
    features = rng.standard_normal((num_nodes, feature_dim)).astype(np.float32)
    labels = rng.integers(0, num_classes, size=num_nodes)
    return Hypergraph(
        num_nodes=num_nodes,
        hyperedges=[np.asarray(e, dtype=np.int64) for e in hyperedges],
        features=features,
        labels=labels,
        num_classes=num_classes,
    )


def random_hypergraph(rng, max_nodes=15, max_edges=10, max_edge_size=5, feature_dim=4, num_classes=3):
    """Small random instance for oracle suites. Every node id < num_nodes;
    edge sizes in [2, max_edge_size]."""
    n = int(rng.integers(3, max_nodes + 1))
    m = int(rng.integers(1, max_edges + 1))
    edges = []
    for _ in range(m):
        size = int(rng.integers(2, min(max_edge_size, n) + 1))
        edges.append(np.sort(rng.choice(n, size=size, replace=False)))
    features = rng.standard_normal((n, feature_dim)).astype(np.float32)
    labels = rng.integers(0, num_classes, size=n)
    return Hypergraph(
        num_nodes=n,
        hyperedges=edges,
        features=features,
        labels=labels,
        num_classes=num_classes,
    )


@pytest.fixture
def th1():
    # three nodes on a path of two overlapping hyperedges
    return make_hypergraph(3, [[0, 1], [1, 2]])


@pytest.fixture
def th1_expanded(th1):
    return expand(th1)
