"""Undirected graphs with a working orientation, plus the geometric primitives
(inter-agent and segment/obstacle distances) everything above this layer uses.

Edges are unordered pairs; each edge also carries a (tail, head) orientation used
only as a bookkeeping convention for incidence and rigidity matrices.  The default
construction sorts edges lexicographically by (min vertex, max vertex) and orients
them min -> max; explicitly ordered edge lists (e.g. loaded from a file) can be
kept as written with ``preserve_order=True``.
"""

from __future__ import annotations

from itertools import combinations
from typing import Iterable, Sequence

import numpy as np


class GraphError(ValueError):
    """Invalid graph construction."""


class TooFewVertices(GraphError):
    """Rigidity in 3-D needs at least 3 vertices."""


class Graph:
    """Undirected simple graph on vertices 0..n-1 with an edge orientation.

    Attributes
    ----------
    n : number of vertices (>= 3)
    edges : tuple of (tail, head) pairs, each a distinct unordered pair
    """

    __slots__ = ("n", "edges", "_edge_index", "_neighbors")

    def __init__(self, n: int, edges: Iterable[Sequence[int]], *, preserve_order: bool = False):
        if n < 3:
            raise TooFewVertices(f"need at least 3 vertices, got {n}")
        seen: set[frozenset[int]] = set()
        pairs: list[tuple[int, int]] = []
        for e in edges:
            u, v = int(e[0]), int(e[1])
            if u == v:
                raise GraphError(f"self-loop at vertex {u}")
            if not (0 <= u < n and 0 <= v < n):
                raise GraphError(f"edge ({u},{v}) out of range for n={n}")
            key = frozenset((u, v))
            if key in seen:
                raise GraphError(f"duplicate edge ({u},{v})")
            seen.add(key)
            pairs.append((u, v))
        if not preserve_order:
            pairs = sorted((min(u, v), max(u, v)) for u, v in pairs)
        self.n = n
        self.edges = tuple(pairs)
        self._edge_index = {frozenset(e): k for k, e in enumerate(self.edges)}
        nbrs: list[list[int]] = [[] for _ in range(n)]
        for u, v in self.edges:
            nbrs[u].append(v)
            nbrs[v].append(u)
        self._neighbors = tuple(tuple(sorted(a)) for a in nbrs)

    @property
    def m(self) -> int:
        return len(self.edges)

    def neighbors(self, i: int) -> tuple[int, ...]:
        return self._neighbors[i]

    def degree(self, i: int) -> int:
        return len(self._neighbors[i])

    def edge_index(self, u: int, v: int) -> int:
        """Index of the undirected edge {u, v}; KeyError if absent."""
        return self._edge_index[frozenset((u, v))]

    def has_edge(self, u: int, v: int) -> bool:
        return frozenset((u, v)) in self._edge_index

    def incident_edges(self, i: int) -> list[int]:
        return [k for k, (u, v) in enumerate(self.edges) if i == u or i == v]

    def is_connected(self) -> bool:
        if self.n == 0:
            return True
        seen = np.zeros(self.n, dtype=bool)
        stack = [0]
        seen[0] = True
        while stack:
            u = stack.pop()
            for v in self._neighbors[u]:
                if not seen[v]:
                    seen[v] = True
                    stack.append(v)
        return bool(seen.all())

    def __repr__(self) -> str:  # pragma: no cover
        return f"Graph(n={self.n}, m={self.m})"


def complete_graph(n: int) -> Graph:
    """K_n with the default lexicographic edge order/orientation."""
    return Graph(n, combinations(range(n), 2))


def incidence_matrix(g: Graph) -> np.ndarray:
    """n x m incidence matrix: +1 at the tail of each edge, -1 at the head.

    Every column sums to zero, so 1^T E = 0.
    """
    E = np.zeros((g.n, g.m))
    for k, (u, v) in enumerate(g.edges):
        E[u, k] = 1.0
        E[v, k] = -1.0
    return E


def local_incidence_matrix(g: Graph, j: int) -> np.ndarray:
    """Vertex j's local incidence matrix E_l(G_j), an n x m masked re-orientation.

    Columns of edges not incident to j are zero; incident columns are the global
    incidence columns re-oriented (sign-flipped where needed) so that j is the
    tail of every one of its edges.  Equals E(G) . diag(s) with s_k in {+1,-1,0}.
    """
    E = incidence_matrix(g)
    s = np.zeros(g.m)
    for k, (u, v) in enumerate(g.edges):
        if u == j:
            s[k] = 1.0
        elif v == j:
            s[k] = -1.0
    return E * s


def check_positions(p: np.ndarray, n: int | None = None) -> np.ndarray:
    """Validate an (n, 3) position matrix: shape, dtype, finiteness."""
    p = np.asarray(p, dtype=float)
    if p.ndim != 2 or p.shape[1] != 3:
        raise ValueError(f"positions must be (n, 3), got {p.shape}")
    if n is not None and p.shape[0] != n:
        raise ValueError(f"expected {n} positions, got {p.shape[0]}")
    if not np.isfinite(p).all():
        raise ValueError("positions must be finite")
    return p


def check_obstacles(obs: np.ndarray | None) -> np.ndarray:
    """Validate an obstacle point set; None or empty becomes a (0, 3) array."""
    if obs is None:
        return np.zeros((0, 3))
    obs = np.asarray(obs, dtype=float)
    if obs.size == 0:
        return np.zeros((0, 3))
    if obs.ndim != 2 or obs.shape[1] != 3:
        raise ValueError(f"obstacles must be (k, 3), got {obs.shape}")
    if not np.isfinite(obs).all():
        raise ValueError("obstacle points must be finite")
    return obs


def pairwise_distance(p: np.ndarray, i: int, j: int) -> float:
    """Euclidean distance between agents i and j."""
    d = p[i] - p[j]
    return float(np.sqrt(d @ d))


def distance_matrix(p: np.ndarray) -> np.ndarray:
    """Symmetric n x n matrix of inter-agent distances (zero diagonal)."""
    diff = p[:, None, :] - p[None, :, :]
    return np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))


def point_segment_distance(x: np.ndarray, a: np.ndarray, b: np.ndarray) -> float:
    """Distance from point x to the closed segment [a, b]."""
    ab = b - a
    denom = float(ab @ ab)
    if denom < 1e-24:
        d = x - a
        return float(np.sqrt(d @ d))
    t = float((x - a) @ ab) / denom
    t = min(1.0, max(0.0, t))
    d = a + t * ab - x
    return float(np.sqrt(d @ d))


def point_obstacle_distance(x: np.ndarray, obstacles: np.ndarray) -> float:
    """Distance from x to the nearest obstacle point; +inf when there are none."""
    if obstacles.shape[0] == 0:
        return float("inf")
    d = obstacles - x[None, :]
    return float(np.sqrt(np.min(np.einsum("ij,ij->i", d, d))))


def segment_obstacle_distance(a: np.ndarray, b: np.ndarray, obstacles: np.ndarray) -> float:
    """Clearance of the segment [a, b] from the obstacle point set.

    Minimum over obstacle points of the point-segment distance; +inf sentinel for
    an empty set.  Degenerate segments (|a-b| ~ 0) reduce to the point distance.
    """
    if obstacles.shape[0] == 0:
        return float("inf")
    return min(point_segment_distance(o, a, b) for o in obstacles)
