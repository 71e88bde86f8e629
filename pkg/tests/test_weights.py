"""Weight model: factor shapes, symmetry, gradients, candidate sets."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from swarmrigid.weights import (
    WeightParams,
    alpha,
    beta,
    beta_slope,
    candidate_set,
    clearance_factor,
    clearance_slope,
    edge_weights,
    gamma_a,
    gamma_a_slope,
    gamma_b,
    gamma_b_slope,
    pair_weights,
    smoothstep,
    smoothstep_slope,
    weight,
    weight_gradient,
)
from conftest import DEMO_WEIGHTS, octahedron_positions

NO_OBS = np.zeros((0, 3))


def test_param_validation():
    with pytest.raises(ValueError):
        WeightParams(D=6, l_min=4, l_0=1, delta_a=1, delta_b=1, sigma_beta=2)
    with pytest.raises(ValueError):
        WeightParams(D=6, l_min=1, l_0=4, delta_a=3.0, delta_b=1, sigma_beta=2)
    with pytest.raises(ValueError):
        WeightParams(D=6, l_min=1, l_0=4, delta_a=1, delta_b=4.0, sigma_beta=2)
    with pytest.raises(ValueError):
        WeightParams(D=6, l_min=1, l_0=4, delta_a=1, delta_b=1, sigma_beta=0.0)


def test_smoothstep_shape():
    assert smoothstep(-0.5) == 0.0
    assert smoothstep(0.0) == 0.0
    assert smoothstep(0.5) == 0.5
    assert smoothstep(1.0) == 1.0
    assert smoothstep(7.0) == 1.0
    assert smoothstep_slope(0.0) == 0.0 and smoothstep_slope(1.0) == 0.0
    assert smoothstep_slope(0.5) == pytest.approx(1.5)


def test_range_factor_plateaus():
    p = DEMO_WEIGHTS
    assert gamma_a(0.5, p) == 1.0
    assert gamma_a(p.D - p.delta_a, p) == 1.0
    assert gamma_a(p.D, p) == 0.0
    assert gamma_a(p.D + 3.0, p) == 0.0
    mid = gamma_a(p.D - 0.5 * p.delta_a, p)
    assert 0.0 < mid < 1.0
    assert gamma_a_slope(p.D - 0.5 * p.delta_a, p) < 0.0


def test_line_of_sight_factor():
    p = DEMO_WEIGHTS
    assert gamma_b(p.l_min, p) == 0.0
    assert gamma_b(p.l_min + p.delta_b, p) == 1.0
    assert gamma_b(float("inf"), p) == 1.0
    assert gamma_b_slope(float("inf"), p) == 0.0
    assert gamma_b_slope(p.l_min + 0.5 * p.delta_b, p) > 0.0


def test_preferred_distance_bump_peaks_at_l0():
    p = DEMO_WEIGHTS
    assert beta(p.l_0, p) == 1.0
    assert beta_slope(p.l_0, p) == 0.0
    assert beta(p.l_0 - 1.0, p) == beta(p.l_0 + 1.0, p)
    assert beta(p.l_0 + 1.0, p) < 1.0


def test_clearance_factor_monotone():
    p = DEMO_WEIGHTS
    ds = np.linspace(p.l_min - 0.5, p.l_min + p.delta_b + 0.5, 200)
    vals = [clearance_factor(float(d), p) for d in ds]
    assert vals[0] == 0.0 and vals[-1] == 1.0
    assert all(b >= a for a, b in zip(vals, vals[1:]))
    assert clearance_slope(p.l_min + 0.5 * p.delta_b, p) > 0.0


@settings(max_examples=60, deadline=None)
@given(st.integers(min_value=0, max_value=10_000))
def test_weight_bounds_and_symmetry(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(3, 7))
    p = rng.uniform(-4, 4, size=(n, 3))
    obs = rng.uniform(-4, 4, size=(int(rng.integers(0, 3)), 3))
    u, v = rng.choice(n, size=2, replace=False)
    w_uv = weight(int(u), int(v), p, obs, DEMO_WEIGHTS)
    w_vu = weight(int(v), int(u), p, obs, DEMO_WEIGHTS)
    assert 0.0 <= w_uv <= 1.0
    assert w_uv == w_vu  # bit-for-bit, thanks to canonical pair ordering


def test_weight_is_one_in_the_sweet_spot():
    # two agents at the preferred distance, nothing else anywhere near
    p = np.array([[0.0, 0, 0], [4.0, 0, 0], [100.0, 100, 100]])
    assert weight(0, 1, p, NO_OBS, DEMO_WEIGHTS) == 1.0


def test_weight_vanishes_out_of_range():
    p = np.array([[0.0, 0, 0], [6.0, 0, 0], [50.0, 50, 50]])
    assert weight(0, 1, p, NO_OBS, DEMO_WEIGHTS) == 0.0
    assert np.array_equal(weight_gradient(0, 1, p, NO_OBS, DEMO_WEIGHTS, 0), np.zeros(3))


def test_obstacle_blocks_line_of_sight():
    # obstacle sitting on the segment mid-point kills the weight
    p = np.array([[0.0, 0, 0], [4.0, 0, 0], [50.0, 50, 50]])
    obs = np.array([[2.0, 0.0, 0.0]])
    assert weight(0, 1, p, obs, DEMO_WEIGHTS) == 0.0
    # the same obstacle moved far off the segment does nothing
    far = np.array([[2.0, 30.0, 0.0]])
    assert weight(0, 1, p, far, DEMO_WEIGHTS) == 1.0


def test_close_pair_pulls_weight_down_via_clearance():
    wp = DEMO_WEIGHTS
    base = np.array([[0.0, 0, 0], [4.0, 0, 0], [100.0, 100, 100]])
    w_far = weight(0, 1, base, NO_OBS, wp)
    close = base.copy()
    close[2] = [0.0, wp.l_min + 0.3 * wp.delta_b, 0.0]  # crowding agent 0
    w_close = weight(0, 1, close, NO_OBS, wp)
    assert w_close < w_far
    assert w_close > 0.0


def test_candidate_set_strict_thresholds():
    wp = DEMO_WEIGHTS
    p = np.array(
        [
            [0.0, 0, 0],
            [wp.D, 0, 0],        # exactly at range: excluded
            [wp.D - 1e-9, 5, 5],  # in range but far in other axes -> excluded anyway
            [2.0, 0, 0],
        ]
    )
    s0 = candidate_set(0, p, NO_OBS, wp)
    assert 1 not in s0
    assert 3 in s0
    # an obstacle on the connecting segment removes the candidate
    obs = np.array([[1.0, 0.0, 0.0]])
    assert 3 not in candidate_set(0, p, obs, wp)


def test_alpha_counts_both_endpoints_and_obstacles():
    wp = DEMO_WEIGHTS
    p = np.array([[0.0, 0, 0], [4.0, 0, 0], [100.0, 100, 100]])
    assert alpha(0, 1, p, NO_OBS, wp) == 1.0
    obs = np.array([[0.0, wp.l_min + 0.5 * wp.delta_b, 0.0]])
    a = alpha(0, 1, p, obs, wp)
    assert 0.0 < a < 1.0


def _fd_weight(u, v, p, obs, params, wrt, h=1e-6):
    g = np.zeros(3)
    for s in range(3):
        for sign in (+1.0, -1.0):
            p2 = p.copy()
            p2[wrt, s] += sign * h
            g[s] += sign * weight(u, v, p2, obs, params) / (2 * h)
    return g


def _kink_free(u, v, p, obs, params, margin=1e-3):
    """Every factor argument at least ``margin`` away from a smoothstep corner."""
    ell = float(np.linalg.norm(p[u] - p[v]))
    corners = [params.D - params.delta_a, params.D]
    if any(abs(ell - c) < margin for c in corners):
        return False
    for a in (u, v):
        for k in range(p.shape[0]):
            if k == a:
                continue
            d = float(np.linalg.norm(p[a] - p[k]))
            if abs(d - params.l_min) < margin or abs(d - params.l_min - params.delta_b) < margin:
                return False
            if abs(d - params.D) < margin:
                return False
    return True


def test_weight_gradient_matches_finite_differences(rng):
    checked = 0
    while checked < 12:
        n = 5
        p = rng.uniform(-3.5, 3.5, size=(n, 3))
        u, v = 0, 1
        if not _kink_free(u, v, p, NO_OBS, DEMO_WEIGHTS):
            continue
        w = weight(u, v, p, NO_OBS, DEMO_WEIGHTS)
        if w < 1e-6:
            continue
        for wrt in range(n):
            analytic = weight_gradient(u, v, p, NO_OBS, DEMO_WEIGHTS, wrt)
            fd = _fd_weight(u, v, p, NO_OBS, DEMO_WEIGHTS, wrt)
            scale = max(1e-9, float(np.linalg.norm(fd)))
            assert np.linalg.norm(analytic - fd) / scale < 1e-4, (
                f"wrt={wrt} analytic={analytic} fd={fd}"
            )
        checked += 1


def test_weight_gradient_locality_is_exactly_zero():
    p = np.array([[0.0, 0, 0], [4.0, 0, 0], [2.0, 3.0, 0], [200.0, 200, 200]])
    g = weight_gradient(0, 1, p, NO_OBS, DEMO_WEIGHTS, 3)
    assert np.array_equal(g, np.zeros(3))


def test_third_party_gradient_is_nonzero_when_crowding():
    wp = DEMO_WEIGHTS
    p = np.array([[0.0, 0, 0], [4.0, 0, 0], [0.0, wp.l_min + 0.4 * wp.delta_b, 0.0]])
    g = weight_gradient(0, 1, p, NO_OBS, wp, 2)
    assert np.linalg.norm(g) > 0.0
    fd = _fd_weight(0, 1, p, NO_OBS, wp, 2)
    assert np.linalg.norm(g - fd) / np.linalg.norm(fd) < 1e-4


def test_edge_and_pair_weights_agree():
    p = octahedron_positions()
    from swarmrigid.graphs import complete_graph

    g = complete_graph(6)
    w_edges = edge_weights(g, p, NO_OBS, DEMO_WEIGHTS)
    W = pair_weights(p, NO_OBS, DEMO_WEIGHTS)
    assert np.array_equal(W, W.T)
    for k, (u, v) in enumerate(g.edges):
        assert w_edges[k] == W[u, v]
    # restricting to a pair list leaves the others at zero
    W2 = pair_weights(p, NO_OBS, DEMO_WEIGHTS, pairs=[(0, 1)])
    assert W2[0, 1] == W[0, 1]
    assert W2[2, 3] == 0.0
