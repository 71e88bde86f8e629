"""Shared generators: frameworks with known character (rigid / flexible /
degenerate) and the weight parameters used by the bundled scenarios."""

import numpy as np
import pytest

from swarmrigid.graphs import Graph, complete_graph
from swarmrigid.rigidity import WeightedFramework
from swarmrigid.weights import WeightParams, edge_weights

# the parameter set the bundled scenarios use (ranges in meters)
DEMO_WEIGHTS = WeightParams(
    D=6.0, l_min=1.0, l_0=4.0, delta_a=1.5, delta_b=1.0, sigma_beta=2.0
)

_OCTA = np.array(
    [
        [1.0, 0.0, 0.0],
        [-1.0, 0.0, 0.0],
        [0.0, 1.0, 0.0],
        [0.0, -1.0, 0.0],
        [0.0, 0.0, 1.0],
        [0.0, 0.0, -1.0],
    ]
)


def octahedron_positions(seed: int = 5, scale: float = 2.6, jitter: float = 0.3):
    """Jittered octahedron: reliably rigid under DEMO_WEIGHTS, decent gap."""
    rng = np.random.default_rng(seed)
    return scale * _OCTA + rng.uniform(-jitter, jitter, size=(6, 3))


def cube_positions(seed: int = 0, scale: float = 1.9, jitter: float = 0.25):
    corners = np.array(
        [[x, y, z] for x in (-1.0, 1.0) for y in (-1.0, 1.0) for z in (-1.0, 1.0)]
    )
    rng = np.random.default_rng(seed)
    return scale * corners + rng.uniform(-jitter, jitter, size=(8, 3))


def model_framework(positions, obstacles=None, params=DEMO_WEIGHTS):
    """Complete graph + sensing-model weights on the given positions."""
    obs = np.zeros((0, 3)) if obstacles is None else np.asarray(obstacles, float)
    g = complete_graph(positions.shape[0])
    w = edge_weights(g, positions, obs, params)
    return WeightedFramework(g, positions, w)


def random_connected_graph(rng, n: int, extra: float = 0.35) -> Graph:
    """Random spanning tree plus a fraction of the remaining pairs."""
    order = rng.permutation(n)
    edges = set()
    for idx in range(1, n):
        u = int(order[idx])
        v = int(order[int(rng.integers(0, idx))])
        edges.add((min(u, v), max(u, v)))
    for u in range(n):
        for v in range(u + 1, n):
            if (u, v) not in edges and rng.random() < extra:
                edges.add((u, v))
    return Graph(n, sorted(edges))


def random_framework(rng, n: int, extra: float = 0.35) -> WeightedFramework:
    """Random connected graph, generic positions, positive random weights."""
    g = random_connected_graph(rng, n, extra)
    p = rng.uniform(-3.0, 3.0, size=(n, 3))
    w = rng.uniform(0.3, 2.0, size=g.m)
    return WeightedFramework(g, p, w)


@pytest.fixture
def rng():
    return np.random.default_rng(20260823)
