"""Inter-agent weight model: smooth link quality in [0, 1] per agent pair.

W_uv is a product of four C1 factors, each responding to one physical
requirement and vanishing before its constraint is violated:

* gamma_a(l_uv): communication range; 1 on [0, D - delta_a], smoothsteps to 0 at
  the range limit D.
* gamma_b(l_uv_o): line-of-sight; 0 when the segment u-v passes within l_min of
  an obstacle point, smoothsteps to 1 once the clearance exceeds l_min + delta_b.
* beta(l_uv): preferred spacing; Gaussian bump centred on l_0.
* alpha: collision clearance; product of smoothstep factors over u's and v's
  distances to their candidate neighbours and to every obstacle point, each
  vanishing at separation l_min.

All thresholds live in :class:`WeightParams`.  The candidate set S_u contains
the agents u can plausibly interact with (range < D, segment clearance above
l_min); its membership is treated as locally constant when differentiating, so
gradients are exact away from set-change boundaries.  Weight evaluation is
canonicalised on the unordered pair, making W_uv == W_vu bit-for-bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .graphs import Graph, point_segment_distance

__all__ = [
    "WeightParams",
    "smoothstep",
    "smoothstep_slope",
    "gamma_a",
    "gamma_a_slope",
    "gamma_b",
    "gamma_b_slope",
    "beta",
    "beta_slope",
    "clearance_factor",
    "clearance_slope",
    "candidate_set",
    "alpha",
    "weight",
    "weight_gradient",
    "edge_weights",
    "pair_weights",
    "edge_weight_gradient_map",
]


@dataclass(frozen=True)
class WeightParams:
    """Thresholds of the weight model (all lengths in meters).

    D: communication/sensing range; l_min: minimum safe separation; l_0:
    preferred inter-agent distance; delta_a / delta_b: widths of the range and
    clearance transitions; sigma_beta: spread of the preferred-distance bump.
    """

    D: float
    l_min: float
    l_0: float
    delta_a: float
    delta_b: float
    sigma_beta: float

    def __post_init__(self):
        if not (0.0 < self.l_min < self.l_0 < self.D):
            raise ValueError(f"need 0 < l_min < l_0 < D, got {self}")
        if not (0.0 < self.delta_a <= self.D - self.l_0):
            raise ValueError("delta_a must lie in (0, D - l_0]")
        if not (0.0 < self.delta_b <= self.l_0 - self.l_min):
            raise ValueError("delta_b must lie in (0, l_0 - l_min]")
        if self.sigma_beta <= 0.0:
            raise ValueError("sigma_beta must be positive")


def smoothstep(t: float) -> float:
    """Cubic smoothstep: 0 below 0, 1 above 1, 3t^2 - 2t^3 between."""
    if t <= 0.0:
        return 0.0
    if t >= 1.0:
        return 1.0
    return t * t * (3.0 - 2.0 * t)


def smoothstep_slope(t: float) -> float:
    """d smoothstep / dt; zero outside (0, 1) so the glue is C1."""
    if t <= 0.0 or t >= 1.0:
        return 0.0
    return 6.0 * t * (1.0 - t)


def gamma_a(ell: float, params: WeightParams) -> float:
    """Range factor: 1 out to D - delta_a, 0 from D onward."""
    return 1.0 - smoothstep((ell - (params.D - params.delta_a)) / params.delta_a)


def gamma_a_slope(ell: float, params: WeightParams) -> float:
    return -smoothstep_slope((ell - (params.D - params.delta_a)) / params.delta_a) / params.delta_a


def gamma_b(clearance: float, params: WeightParams) -> float:
    """Line-of-sight factor of a segment/obstacle clearance (inf -> 1)."""
    return smoothstep((clearance - params.l_min) / params.delta_b)


def gamma_b_slope(clearance: float, params: WeightParams) -> float:
    return smoothstep_slope((clearance - params.l_min) / params.delta_b) / params.delta_b


def beta(ell: float, params: WeightParams) -> float:
    """Preferred-distance bump, peaking at 1 for ell = l_0."""
    x = (ell - params.l_0) / params.sigma_beta
    return math.exp(-0.5 * x * x)


def beta_slope(ell: float, params: WeightParams) -> float:
    return -(ell - params.l_0) / (params.sigma_beta**2) * beta(ell, params)


def clearance_factor(d: float, params: WeightParams) -> float:
    """Collision-clearance smoothstep: 0 at separation l_min, 1 past l_min + delta_b."""
    return smoothstep((d - params.l_min) / params.delta_b)


def clearance_slope(d: float, params: WeightParams) -> float:
    return smoothstep_slope((d - params.l_min) / params.delta_b) / params.delta_b


def candidate_set(
    u: int, p: np.ndarray, obstacles: np.ndarray, params: WeightParams
) -> list[int]:
    """S_u: agents within range of u whose connecting segment clears obstacles."""
    out = []
    for k in range(p.shape[0]):
        if k == u:
            continue
        d = p[u] - p[k]
        ell = float(np.sqrt(d @ d))
        if ell >= params.D:
            continue
        if _segment_clearance(p[u], p[k], obstacles)[0] <= params.l_min:
            continue
        out.append(k)
    return out


def _segment_clearance(a, b, obstacles) -> tuple[float, int]:
    """(min point-segment distance over obstacle points, argmin index); (inf, -1) if none."""
    best, arg = float("inf"), -1
    for idx in range(obstacles.shape[0]):
        d = point_segment_distance(obstacles[idx], a, b)
        if d < best:
            best, arg = d, idx
    return best, arg


def _segment_clearance_grads(a, b, o):
    """Gradients of the point-segment distance w.r.t. the endpoints a and b."""
    ab = b - a
    denom = float(ab @ ab)
    t = 0.0 if denom < 1e-24 else min(1.0, max(0.0, float((o - a) @ ab) / denom))
    c = a + t * ab
    diff = c - o
    d = float(np.sqrt(diff @ diff))
    if d < 1e-12:
        z = np.zeros(3)
        return z, z
    unit = diff / d
    return (1.0 - t) * unit, t * unit


class _FactorList:
    """Product of scalar factors, each with sparse per-vertex gradients."""

    def __init__(self):
        self.values: list[float] = []
        self.grads: list[dict[int, np.ndarray]] = []

    def add(self, value: float, grads: dict[int, np.ndarray] | None = None):
        self.values.append(value)
        self.grads.append(grads or {})

    def value(self) -> float:
        out = 1.0
        for v in self.values:
            out *= v
        return out

    def gradient(self, wrt: int) -> np.ndarray:
        # product rule with explicit exclusion products (robust at zeros)
        g = np.zeros(3)
        for f, dmap in enumerate(self.grads):
            if wrt not in dmap:
                continue
            rest = 1.0
            for j, v in enumerate(self.values):
                if j != f:
                    rest *= v
            g += rest * dmap[wrt]
        return g

    def involved(self) -> set[int]:
        out: set[int] = set()
        for dmap in self.grads:
            out.update(dmap.keys())
        return out


def _build_factors(
    u: int,
    v: int,
    p: np.ndarray,
    obstacles: np.ndarray,
    params: WeightParams,
    s_u: list[int] | None = None,
    s_v: list[int] | None = None,
) -> _FactorList:
    """All factors of W_uv with their per-vertex gradients (canonical pair order)."""
    if u > v:
        u, v = v, u
        s_u, s_v = s_v, s_u
    fl = _FactorList()
    duv = p[u] - p[v]
    ell = float(np.sqrt(duv @ duv))
    unit = duv / ell if ell > 1e-12 else np.zeros(3)

    ga = gamma_a(ell, params)
    ga_s = gamma_a_slope(ell, params)
    fl.add(ga, {u: ga_s * unit, v: -ga_s * unit})
    if ga == 0.0:
        return fl  # out of range: remaining factors are irrelevant (weight is 0)

    clr, arg = _segment_clearance(p[u], p[v], obstacles)
    gb = gamma_b(clr, params)
    gb_s = gamma_b_slope(clr, params)
    if arg >= 0 and gb_s != 0.0:
        da, db = _segment_clearance_grads(p[u], p[v], obstacles[arg])
        fl.add(gb, {u: gb_s * da, v: gb_s * db})
    else:
        fl.add(gb)

    be = beta(ell, params)
    be_s = beta_slope(ell, params)
    fl.add(be, {u: be_s * unit, v: -be_s * unit})

    # clearance products over both endpoints' candidate sets; note the pair's own
    # separation enters twice (once per endpoint), exactly as the product is defined
    for a, cand in ((u, s_u), (v, s_v)):
        members = candidate_set(a, p, obstacles, params) if cand is None else cand
        for k in members:
            dak = p[a] - p[k]
            dk = float(np.sqrt(dak @ dak))
            cf = clearance_factor(dk, params)
            cs = clearance_slope(dk, params)
            uk = dak / dk if dk > 1e-12 else np.zeros(3)
            fl.add(cf, {a: cs * uk, k: -cs * uk})
        for idx in range(obstacles.shape[0]):
            dao = p[a] - obstacles[idx]
            do = float(np.sqrt(dao @ dao))
            cf = clearance_factor(do, params)
            cs = clearance_slope(do, params)
            uo = dao / do if do > 1e-12 else np.zeros(3)
            fl.add(cf, {a: cs * uo})
    return fl


def alpha(
    u: int,
    v: int,
    p: np.ndarray,
    obstacles: np.ndarray,
    params: WeightParams,
) -> float:
    """Collision-clearance product for the pair (u, v)."""
    if u > v:
        u, v = v, u
    out = 1.0
    for a in (u, v):
        for k in candidate_set(a, p, obstacles, params):
            out *= clearance_factor(float(np.linalg.norm(p[a] - p[k])), params)
        for idx in range(obstacles.shape[0]):
            out *= clearance_factor(float(np.linalg.norm(p[a] - obstacles[idx])), params)
    return out


def weight(
    u: int,
    v: int,
    p: np.ndarray,
    obstacles: np.ndarray,
    params: WeightParams,
    s_u: list[int] | None = None,
    s_v: list[int] | None = None,
) -> float:
    """W_uv = alpha * beta * gamma_a * gamma_b, in [0, 1], symmetric in (u, v).

    ``s_u`` / ``s_v`` optionally supply precomputed candidate sets for the two
    endpoints (in (u, v) argument order) to avoid recomputing them per pair.
    """
    return _build_factors(u, v, p, obstacles, params, s_u, s_v).value()


def weight_gradient(
    u: int,
    v: int,
    p: np.ndarray,
    obstacles: np.ndarray,
    params: WeightParams,
    wrt: int,
) -> np.ndarray:
    """d W_uv / d p_wrt (3-vector); exactly zero for uninvolved vertices.

    ``wrt`` may be u, v, a third agent entering through a clearance factor, or
    anything else (then the result is the zero vector, with no tolerance).
    """
    return _build_factors(u, v, p, obstacles, params).gradient(wrt)


def edge_weights(
    graph: Graph, p: np.ndarray, obstacles: np.ndarray, params: WeightParams
) -> np.ndarray:
    """Per-edge weight vector for a graph's edge list."""
    return np.array([weight(u, v, p, obstacles, params) for u, v in graph.edges])


def pair_weights(
    p: np.ndarray,
    obstacles: np.ndarray,
    params: WeightParams,
    candidate_sets: list[list[int]] | None = None,
    pairs: list[tuple[int, int]] | None = None,
) -> np.ndarray:
    """Symmetric n x n matrix of pair weights (zero diagonal).

    ``pairs`` restricts evaluation to the given unordered pairs (others stay 0);
    ``candidate_sets`` supplies S_u for every agent to avoid per-pair recomputes.
    """
    n = p.shape[0]
    if candidate_sets is None:
        candidate_sets = [candidate_set(u, p, obstacles, params) for u in range(n)]
    if pairs is None:
        pairs = [(u, v) for u in range(n) for v in range(u + 1, n)]
    W = np.zeros((n, n))
    for u, v in pairs:
        W[u, v] = W[v, u] = weight(
            u, v, p, obstacles, params, candidate_sets[u], candidate_sets[v]
        )
    return W


def edge_weight_gradient_map(
    graph: Graph, p: np.ndarray, obstacles: np.ndarray, params: WeightParams
):
    """Factory for :func:`swarmrigid.rigidity.lambda7_gradient`'s weight callback.

    Returns ``f(k) -> {vertex: d W_k / d p_vertex}`` over every vertex edge k's
    weight depends on, third parties included.
    """

    def grads(k: int):
        u, v = graph.edges[k]
        fl = _build_factors(u, v, p, obstacles, params)
        return {i: fl.gradient(i) for i in sorted(fl.involved())}

    return grads
