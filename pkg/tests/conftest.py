import numpy as np
import pytest

from graphstack.graph import Graph


@pytest.fixture
def k2():
    """Single-edge graph on two nodes."""
    return Graph.from_edges(2, [(0, 1)])


@pytest.fixture
def path3():
    return Graph.from_edges(3, [(0, 1), (1, 2)])


def random_graph(num_nodes, edge_prob, seed):
    """Erdos-Renyi test graph (may contain isolated nodes)."""
    rng = np.random.default_rng(seed)
    edges = [(u, v)
             for u in range(num_nodes)
             for v in range(u + 1, num_nodes)
             if rng.random() < edge_prob]
    return Graph.from_edges(num_nodes, edges)


def dense_laplacian(graph):
    """Independent dense oracle: D - A from the raw edge set."""
    n = graph.num_nodes
    a = np.zeros((n, n))
    for u, v in graph.edge_pairs():
        a[u, v] = a[v, u] = 1.0
    return np.diag(a.sum(axis=1)) - a
