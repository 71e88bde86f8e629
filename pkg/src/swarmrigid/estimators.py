"""Distributed estimation layer: every quantity an agent needs, from neighbors only.

Three cooperating pieces, all integrated with forward Euler at the (fast)
estimator rate:

* a relative-position estimator: gradient descent on squared range residuals,
  anchored by the common agent i_c (whose own estimate is pinned to zero) and by
  two agents that measure their relative position to i_c directly;
* proportional-integral (PI) average-consensus filters: each agent tracks the
  network average of a locally computed input; the integral state w makes the
  filter exact for constant inputs, and sum_i w_i is conserved;
* a continuous-time power iteration for the rigidity eigenvector: each agent
  updates its three components of v_hat by deflating the trivial motions
  (through T T^T, evaluated from consensus moments), contracting through the
  local action of the symmetric rigidity matrix, and regulating the norm of
  v_hat toward an equilibrium that encodes lambda_7.

The consensus moments are, per agent i with relative position estimate q = p_hat_i:
  avg_v   <- v_hat_i                      (3 channels)
  avg_v2  <- v_hat_i * v_hat_i            (3 channels)
  cross   <- (q^y v^x - q^x v^y,  q^z v^x - q^x v^z,  q^z v^y - q^y v^z)
so that n * cross equals T's three rotation columns dotted with v_hat.

At the norm equilibrium, lambda_7 is recovered per agent as
(k3/k2) * (1 - mean(avg_v2)).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np


class MissingNeighborPacket(RuntimeError):
    """A declared neighbor's packet was not delivered this substep."""


class StaleSpecialMeasurement(RuntimeError):
    """An anchor agent stepped without a fresh relative measurement to i_c."""


@dataclass(frozen=True)
class Gains:
    """Estimator and consensus gains.

    k1: trivial-motion deflation; k2: rigidity-matrix contraction; k3: norm
    regulation; kp / ki: proportional and integral consensus couplings; gamma:
    consensus input tracking; eta_pos: position-estimator step gain.
    """

    k1: float
    k2: float
    k3: float
    kp: float
    ki: float
    gamma: float
    eta_pos: float

    def __post_init__(self):
        for name in ("k1", "k2", "k3", "kp", "ki", "gamma", "eta_pos"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"gain {name} must be positive")


@dataclass
class PiFilterState:
    """One PI consensus filter over c parallel scalar channels."""

    z: np.ndarray
    w: np.ndarray

    @classmethod
    def from_input(cls, u0: np.ndarray) -> "PiFilterState":
        return cls(z=np.array(u0, dtype=float), w=np.zeros_like(np.asarray(u0, dtype=float)))


@dataclass
class PositionEstimatorState:
    p_hat: np.ndarray  # estimate of p_i - p_{i_c}, 3-vector


@dataclass
class RigidityEstimatorState:
    v_hat: np.ndarray  # agent's three components of the eigenvector estimate
    avg_v: PiFilterState
    avg_v2: PiFilterState
    cross: PiFilterState


@dataclass
class NeighborPacket:
    """Everything an agent shares with its neighbors in one exchange."""

    sender: int
    p_hat: np.ndarray
    v_hat: np.ndarray
    avg_v_z: np.ndarray
    avg_v_w: np.ndarray
    avg_v2_z: np.ndarray
    avg_v2_w: np.ndarray
    cross_z: np.ndarray
    cross_w: np.ndarray


def make_packet(
    sender: int, pos: PositionEstimatorState, rig: RigidityEstimatorState
) -> NeighborPacket:
    return NeighborPacket(
        sender=sender,
        p_hat=pos.p_hat.copy(),
        v_hat=rig.v_hat.copy(),
        avg_v_z=rig.avg_v.z.copy(),
        avg_v_w=rig.avg_v.w.copy(),
        avg_v2_z=rig.avg_v2.z.copy(),
        avg_v2_w=rig.avg_v2.w.copy(),
        cross_z=rig.cross.z.copy(),
        cross_w=rig.cross.w.copy(),
    )


def pi_consensus_step(
    state: PiFilterState,
    u_local: np.ndarray,
    neighbor_z: Sequence[np.ndarray],
    neighbor_w: Sequence[np.ndarray],
    gains: Gains,
    dt: float,
) -> PiFilterState:
    """One Euler step of the PI average-consensus filter.

    z' = gamma (u - z) - kp sum_j (z - z_j) + ki sum_j (w - w_j)
    w' =                - ki sum_j (z - z_j)

    The w-coupling signs make sum_i w_i invariant on undirected graphs, which
    pins the filter's fixed point to the exact network average of the input.
    """
    z, w = state.z, state.w
    deg = len(neighbor_z)
    sum_z = np.sum(neighbor_z, axis=0) if deg else np.zeros_like(z)
    sum_w = np.sum(neighbor_w, axis=0) if deg else np.zeros_like(w)
    dz = gains.gamma * (np.asarray(u_local, dtype=float) - z)
    dz = dz - gains.kp * (deg * z - sum_z) + gains.ki * (deg * w - sum_w)
    dw = -gains.ki * (deg * z - sum_z)
    return PiFilterState(z=z + dt * dz, w=w + dt * dw)


def position_estimator_step(
    state: PositionEstimatorState,
    packets: Mapping[int, NeighborPacket],
    dists: Mapping[int, float],
    gains: Gains,
    dt: float,
    *,
    is_center: bool = False,
    anchor_required: bool = False,
    anchor_target: np.ndarray | None = None,
) -> PositionEstimatorState:
    """Gradient step on the range-residual energy for one agent.

    update = sum_j (|q_j - q_i|^2 - l_ij^2)(q_j - q_i)
             - [i is i_c] q_i  -  [i anchors] (q_i - measured (p_i - p_ic))

    where q are relative-position estimates from the packets.  ``dists`` keys
    declare the neighbor set; a missing packet raises
    :class:`MissingNeighborPacket`; an anchor agent without a fresh measurement
    raises :class:`StaleSpecialMeasurement`.
    """
    q = state.p_hat
    update = np.zeros(3)
    for j, ell in dists.items():
        pkt = packets.get(j)
        if pkt is None:
            raise MissingNeighborPacket(f"no packet from neighbor {j}")
        d = pkt.p_hat - q
        update += (float(d @ d) - ell * ell) * d
    if is_center:
        update -= q
    if anchor_required:
        if anchor_target is None:
            raise StaleSpecialMeasurement("anchor agent has no fresh relative measurement")
        update -= q - np.asarray(anchor_target, dtype=float)
    return PositionEstimatorState(p_hat=q + dt * gains.eta_pos * update)


def local_inputs(p_hat: np.ndarray, v_hat: np.ndarray) -> dict[str, np.ndarray]:
    """The agent's local inputs to the three consensus filters."""
    q, v = p_hat, v_hat
    return {
        "avg_v": v.copy(),
        "avg_v2": v * v,
        "cross": np.array(
            [
                q[1] * v[0] - q[0] * v[1],
                q[2] * v[0] - q[0] * v[2],
                q[2] * v[1] - q[1] * v[2],
            ]
        ),
    }


def ttT_action(n: int, v_bar: np.ndarray, cross: np.ndarray, p_hat: np.ndarray) -> np.ndarray:
    """Agent i's three components of T T^T v_hat, from consensus moments.

    v_bar approximates the average of v_hat; cross approximates the averages of
    the three rotation moments (see module docstring); p_hat is the agent's
    relative position.  Exact when the moments are exact.
    """
    qxy, qxz, qyz = float(cross[0]), float(cross[1]), float(cross[2])
    x = v_bar[0] + qxy * p_hat[1] + qxz * p_hat[2]
    y = v_bar[1] - qxy * p_hat[0] + qyz * p_hat[2]
    z = v_bar[2] - qxz * p_hat[0] - qyz * p_hat[1]
    return n * np.array([x, y, z])


def rigidity_matrix_action(
    p_hat: np.ndarray,
    v_hat: np.ndarray,
    packets: Mapping[int, NeighborPacket],
    weights_row: Mapping[int, float],
) -> np.ndarray:
    """Agent i's block of (R^T W^2 R) v_hat from neighbor estimates.

    sum_j W_ij^2 [(q_i - q_j).(v_i - v_j)] (q_i - q_j), with q the relative
    position estimates carried by the packets.
    """
    out = np.zeros(3)
    for j, w in weights_row.items():
        pkt = packets.get(j)
        if pkt is None:
            raise MissingNeighborPacket(f"no packet from neighbor {j}")
        dq = p_hat - pkt.p_hat
        dv = v_hat - pkt.v_hat
        out += (w * w) * float(dq @ dv) * dq
    return out


def power_iteration_step(
    v_hat: np.ndarray,
    p_hat: np.ndarray,
    packets: Mapping[int, NeighborPacket],
    weights_row: Mapping[int, float],
    v_bar: np.ndarray,
    v2_mean: float,
    cross: np.ndarray,
    gains: Gains,
    n: int,
    dt: float,
) -> np.ndarray:
    """One Euler step of the distributed power iteration for agent i.

    v' = -k1 (T T^T v)_i - k2 ((R^T W^2 R) v)_i - k3 (v2_mean - 1) v_i

    The consensus moments (v_bar, v2_mean, cross) may be filter outputs or, in
    idealized mode, exact network averages.  With gains satisfying k1 > k2
    lambda_7 and k3 > k2 lambda_7 the stacked estimate aligns with the rigidity
    eigenvector and its norm approaches sqrt(3n (1 - (k2/k3) lambda_7)).
    """
    dv = -gains.k1 * ttT_action(n, v_bar, cross, p_hat)
    dv = dv - gains.k2 * rigidity_matrix_action(p_hat, v_hat, packets, weights_row)
    dv = dv - gains.k3 * (v2_mean - 1.0) * v_hat
    return v_hat + dt * dv


def consensus_outputs(est: RigidityEstimatorState) -> tuple[np.ndarray, float, np.ndarray]:
    """(v_bar, v2_mean, cross) as the agent's filters currently report them."""
    return est.avg_v.z, float(np.mean(est.avg_v2.z)), est.cross.z


def eigenvalue_from_mean_square(v2_mean: float, gains: Gains) -> float:
    """lambda_7 from the norm equilibrium: (k3/k2) (1 - mean square of v_hat)."""
    return (gains.k3 / gains.k2) * (1.0 - v2_mean)


def rigidity_eigenvalue_estimate(est: RigidityEstimatorState, gains: Gains) -> float:
    """Agent's local rigidity-eigenvalue estimate from its consensus state."""
    return eigenvalue_from_mean_square(float(np.mean(est.avg_v2.z)), gains)


def init_rigidity_state(v0: np.ndarray, p_hat0: np.ndarray) -> RigidityEstimatorState:
    """Fresh estimator state seeded with eigenvector guess v0 (filters start at
    their local inputs, integral states at zero)."""
    u = local_inputs(np.asarray(p_hat0, dtype=float), np.asarray(v0, dtype=float))
    return RigidityEstimatorState(
        v_hat=np.array(v0, dtype=float),
        avg_v=PiFilterState.from_input(u["avg_v"]),
        avg_v2=PiFilterState.from_input(u["avg_v2"]),
        cross=PiFilterState.from_input(u["cross"]),
    )
