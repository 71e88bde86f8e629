"""Distributed estimators: PI consensus, relative localization, power iteration."""

import numpy as np
import pytest

from swarmrigid.estimators import (
    Gains,
    MissingNeighborPacket,
    NeighborPacket,
    PiFilterState,
    PositionEstimatorState,
    StaleSpecialMeasurement,
    consensus_outputs,
    eigenvalue_from_mean_square,
    init_rigidity_state,
    local_inputs,
    make_packet,
    pi_consensus_step,
    position_estimator_step,
    power_iteration_step,
    rigidity_eigenvalue_estimate,
    rigidity_matrix_action,
    ttT_action,
)
from swarmrigid.graphs import complete_graph
from swarmrigid.rigidity import (
    symmetric_rigidity_matrix,
    trivial_motion_basis,
)
from conftest import model_framework, octahedron_positions

GAINS = Gains(k1=8.0, k2=0.5, k3=8.0, kp=100.0, ki=50.0, gamma=100.0, eta_pos=2.0)


def _ring(n):
    return [((i, (i + 1) % n)) for i in range(n)]


def _run_pi(adjacency, inputs, gains, dt, steps):
    n = len(inputs)
    states = [PiFilterState.from_input(inputs[i]) for i in range(n)]
    for _ in range(steps):
        snap = states
        states = [
            pi_consensus_step(
                snap[i],
                inputs[i],
                [snap[j].z for j in adjacency[i]],
                [snap[j].w for j in adjacency[i]],
                gains,
                dt,
            )
            for i in range(n)
        ]
    return states


def test_gains_validation():
    with pytest.raises(ValueError):
        Gains(k1=0.0, k2=1, k3=1, kp=1, ki=1, gamma=1, eta_pos=1)
    with pytest.raises(ValueError):
        Gains(k1=1, k2=1, k3=1, kp=1, ki=-2.0, gamma=1, eta_pos=1)


def test_pi_consensus_reaches_average_on_a_ring():
    n = 10
    rng = np.random.default_rng(1)
    inputs = rng.uniform(1.0, 5.0, size=(n, 3))
    adjacency = [[] for _ in range(n)]
    for u, v in _ring(n):
        adjacency[u].append(v)
        adjacency[v].append(u)
    states = _run_pi(adjacency, inputs, GAINS, 1e-3, 4000)
    avg = inputs.mean(axis=0)
    for s in states:
        assert np.max(np.abs(s.z - avg)) < 0.01 * np.max(np.abs(avg))


def test_pi_consensus_conserves_integral_state():
    n = 6
    rng = np.random.default_rng(2)
    inputs = rng.normal(size=(n, 3))
    adjacency = [[] for _ in range(n)]
    for u, v in _ring(n):
        adjacency[u].append(v)
        adjacency[v].append(u)
    states = [PiFilterState.from_input(inputs[i]) for i in range(n)]
    total0 = np.sum([s.w for s in states], axis=0)
    for _ in range(500):
        snap = states
        states = [
            pi_consensus_step(
                snap[i], inputs[i],
                [snap[j].z for j in adjacency[i]],
                [snap[j].w for j in adjacency[i]],
                GAINS, 1e-3,
            )
            for i in range(n)
        ]
        total = np.sum([s.w for s in states], axis=0)
        assert np.max(np.abs(total - total0)) < 1e-10
        total0 = total


def test_pi_consensus_disconnected_components_average_separately():
    # two 3-rings with no cross edges: each settles on its own average
    inputs = np.array([[1.0], [2.0], [3.0], [10.0], [20.0], [30.0]])
    adjacency = [[1, 2], [0, 2], [0, 1], [4, 5], [3, 5], [3, 4]]
    states = _run_pi(adjacency, inputs, GAINS, 1e-3, 4000)
    assert states[0].z[0] == pytest.approx(2.0, rel=1e-2)
    assert states[3].z[0] == pytest.approx(20.0, rel=1e-2)
    assert abs(states[0].z[0] - np.mean(inputs)) > 5.0  # not the global average


def test_isolated_agent_tracks_its_own_input():
    s = PiFilterState.from_input(np.array([0.0]))
    for _ in range(2000):
        s = pi_consensus_step(s, np.array([3.0]), [], [], GAINS, 1e-3)
    assert s.z[0] == pytest.approx(3.0, rel=1e-6)


def _packets_from_rows(rows, vrows=None):
    zeros = np.zeros(3)
    out = {}
    for j in range(rows.shape[0]):
        out[j] = NeighborPacket(
            sender=j, p_hat=rows[j].copy(),
            v_hat=(vrows[j].copy() if vrows is not None else zeros.copy()),
            avg_v_z=zeros, avg_v_w=zeros, avg_v2_z=zeros, avg_v2_w=zeros,
            cross_z=zeros, cross_w=zeros,
        )
    return out


def test_position_estimator_exact_fixed_point():
    p = octahedron_positions()
    rel = p - p[0]
    pkts = _packets_from_rows(rel)
    for i in range(6):
        dists = {j: float(np.linalg.norm(p[i] - p[j])) for j in range(6) if j != i}
        new = position_estimator_step(
            PositionEstimatorState(p_hat=rel[i].copy()), pkts, dists, GAINS, 1e-3,
            is_center=(i == 0),
            anchor_required=(i in (1, 2)),
            anchor_target=rel[i] if i in (1, 2) else None,
        )
        assert np.linalg.norm(new.p_hat - rel[i]) < 1e-12


def test_position_estimator_missing_packet_raises():
    with pytest.raises(MissingNeighborPacket):
        position_estimator_step(
            PositionEstimatorState(p_hat=np.zeros(3)), {}, {1: 2.0}, GAINS, 1e-3
        )


def test_anchor_without_measurement_raises():
    with pytest.raises(StaleSpecialMeasurement):
        position_estimator_step(
            PositionEstimatorState(p_hat=np.ones(3)), {}, {}, GAINS, 1e-3,
            anchor_required=True, anchor_target=None,
        )


def test_anchor_term_pulls_toward_measurement():
    target = np.array([1.0, -2.0, 0.5])
    state = PositionEstimatorState(p_hat=np.zeros(3))
    errs = []
    for _ in range(5000):
        state = position_estimator_step(
            state, {}, {}, GAINS, 1e-3, anchor_required=True, anchor_target=target
        )
        errs.append(float(np.linalg.norm(state.p_hat - target)))
    assert errs[-1] < 1e-3
    assert all(b <= a + 1e-15 for a, b in zip(errs, errs[1:]))


def test_center_term_pins_origin():
    state = PositionEstimatorState(p_hat=np.array([0.4, 0.0, -0.2]))
    for _ in range(4500):
        state = position_estimator_step(state, {}, {}, GAINS, 1e-3, is_center=True)
    assert np.linalg.norm(state.p_hat) < 1e-3


def test_ttT_action_matches_matrix_product():
    rng = np.random.default_rng(4)
    p = octahedron_positions()
    rel = p - p[0]
    v = rng.normal(size=(6, 3))
    T = trivial_motion_basis(rel)
    full = (T @ (T.T @ v.ravel())).reshape(6, 3)
    v_bar = v.mean(axis=0)
    cross = np.mean([local_inputs(rel[i], v[i])["cross"] for i in range(6)], axis=0)
    for i in range(6):
        mine = ttT_action(6, v_bar, cross, rel[i])
        assert np.allclose(mine, full[i], atol=1e-12)


def test_rigidity_matrix_action_matches_matrix_product():
    rng = np.random.default_rng(5)
    p = octahedron_positions()
    fw = model_framework(p)
    M = symmetric_rigidity_matrix(fw)
    v = rng.normal(size=(6, 3))
    full = (M @ v.ravel()).reshape(6, 3)
    W = np.zeros((6, 6))
    for k, (u, w_) in enumerate(fw.graph.edges):
        W[u, w_] = W[w_, u] = fw.weights[k]
    pkts = _packets_from_rows(p, v)
    for i in range(6):
        wrow = {j: W[i, j] for j in range(6) if j != i and W[i, j] > 0.0}
        mine = rigidity_matrix_action(p[i], v[i], pkts, wrow)
        assert np.allclose(mine, full[i], atol=1e-10)


def test_rigidity_matrix_action_missing_packet_raises():
    with pytest.raises(MissingNeighborPacket):
        rigidity_matrix_action(np.zeros(3), np.zeros(3), {}, {2: 1.0})


def test_power_iteration_step_assembles_the_three_terms():
    rng = np.random.default_rng(6)
    p = octahedron_positions()
    fw = model_framework(p)
    v = rng.normal(size=(6, 3))
    pkts = _packets_from_rows(p, v)
    W = np.zeros((6, 6))
    for k, (u, w_) in enumerate(fw.graph.edges):
        W[u, w_] = W[w_, u] = fw.weights[k]
    v_bar = v.mean(axis=0)
    v2_mean = float((v * v).mean())
    cross = np.mean([local_inputs(p[i], v[i])["cross"] for i in range(6)], axis=0)
    i = 2
    wrow = {j: W[i, j] for j in range(6) if j != i and W[i, j] > 0.0}
    dt = 1e-3
    out = power_iteration_step(
        v[i], p[i], pkts, wrow, v_bar, v2_mean, cross, GAINS, 6, dt
    )
    expected = v[i] + dt * (
        -GAINS.k1 * ttT_action(6, v_bar, cross, p[i])
        - GAINS.k2 * rigidity_matrix_action(p[i], v[i], pkts, wrow)
        - GAINS.k3 * (v2_mean - 1.0) * v[i]
    )
    assert np.allclose(out, expected, atol=1e-15)


def test_eigenvalue_estimate_formula():
    assert eigenvalue_from_mean_square(1.0, GAINS) == 0.0
    lam = 11.0
    v2 = 1.0 - (GAINS.k2 / GAINS.k3) * lam
    assert eigenvalue_from_mean_square(v2, GAINS) == pytest.approx(lam)


def test_state_init_and_packets_copy_arrays():
    v0 = np.array([0.1, 0.2, 0.3])
    q0 = np.array([1.0, 0.0, 0.0])
    est = init_rigidity_state(v0, q0)
    assert np.array_equal(est.avg_v.z, v0)
    assert np.all(est.avg_v.w == 0.0)
    assert np.array_equal(est.avg_v2.z, v0 * v0)
    lam0 = rigidity_eigenvalue_estimate(est, GAINS)
    assert lam0 == pytest.approx(eigenvalue_from_mean_square(float(np.mean(v0 * v0)), GAINS))
    pkt = make_packet(3, PositionEstimatorState(p_hat=q0), est)
    est.v_hat[0] = 99.0
    q0[0] = 99.0
    assert pkt.v_hat[0] == 0.1  # packets snapshot, not alias
    assert pkt.p_hat[0] == 1.0
    assert pkt.sender == 3
    z, v2m, cross = consensus_outputs(est)
    assert z is est.avg_v.z and isinstance(v2m, float) and cross.shape == (3,)
