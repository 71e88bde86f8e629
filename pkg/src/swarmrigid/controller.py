"""Gradient rigidity-maintenance controller.

Each agent descends a barrier potential of its own rigidity-eigenvalue
estimate: V(lambda) = coth(b (lambda - lambda_min)) - 1, which blows up as
lambda approaches the threshold lambda_min from above and decays to zero for
comfortably rigid formations.  The commanded velocity is

  xi_i = -V'(lambda7_hat_i) * d lambda_7 / d p_i

with the gradient assembled from neighbor terms only, on estimated relative
positions / eigenvector components and measured ranges:

  (d lambda_7 / d p_i)^ = sum_j W_ij^2 2 g_ij (v_i - v_j) + sum_j d(W_ij^2)/dp_i S_ij,
  g_ij = (q_i - q_j).(v_i - v_j),  S_ij = g_ij^2.

Estimates below lambda_min + eps_clamp are clamped before entering the
potential so a transient dip cannot produce unbounded commands; exogenous
mission velocities add on top, and the total is norm-saturated.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .estimators import MissingNeighborPacket, NeighborPacket


class EstimatorNotReady(RuntimeError):
    """Controller invoked before the estimator stack produced a usable estimate."""


@dataclass(frozen=True)
class PotentialParams:
    lambda_min: float
    b: float
    eps_clamp: float

    def __post_init__(self):
        if self.lambda_min < 0.0:
            raise ValueError("lambda_min must be nonnegative")
        if self.b <= 0.0 or self.eps_clamp <= 0.0:
            raise ValueError("b and eps_clamp must be positive")


def clamp_eigenvalue(lam: float, params: PotentialParams) -> float:
    """Pull the potential's argument up to lambda_min + eps_clamp."""
    return max(lam, params.lambda_min + params.eps_clamp)


def is_clamped(lam: float, params: PotentialParams) -> bool:
    return lam < params.lambda_min + params.eps_clamp


def potential(lam: float, params: PotentialParams) -> float:
    """V(lambda) = coth(b (lambda - lambda_min)) - 1, clamped near the barrier."""
    arg = params.b * (clamp_eigenvalue(lam, params) - params.lambda_min)
    return 1.0 / math.tanh(arg) - 1.0


def potential_slope(lam: float, params: PotentialParams) -> float:
    """V'(lambda) = -b / sinh^2(b (lambda - lambda_min)) at the clamped argument.

    Returns exactly 0.0 once the argument exceeds 300 (the true value is below
    the double-precision floor there and sinh would overflow).
    """
    arg = params.b * (clamp_eigenvalue(lam, params) - params.lambda_min)
    if arg > 300.0:
        return 0.0
    s = math.sinh(arg)
    return -params.b / (s * s)


def control_velocity(
    lam7_hat: float | None,
    p_hat: np.ndarray,
    v_hat: np.ndarray,
    packets: Mapping[int, NeighborPacket],
    weights_row: Mapping[int, float],
    weight_grads_row: Mapping[int, np.ndarray],
    params: PotentialParams,
) -> np.ndarray:
    """The rigidity-maintenance command for one agent (before exogenous input).

    ``weights_row`` maps neighbor -> W_ij; ``weight_grads_row`` maps neighbor ->
    d W_ij / d p_i (what the agent can evaluate from its own measurements).
    Raises :class:`EstimatorNotReady` when no eigenvalue estimate exists yet.
    """
    if lam7_hat is None:
        raise EstimatorNotReady("no rigidity-eigenvalue estimate available")
    slope = potential_slope(lam7_hat, params)
    grad = np.zeros(3)
    for j, w in weights_row.items():
        pkt = packets.get(j)
        if pkt is None:
            raise MissingNeighborPacket(f"no packet from neighbor {j}")
        dq = p_hat - pkt.p_hat
        dv = v_hat - pkt.v_hat
        g = float(dq @ dv)
        grad += (w * w) * 2.0 * g * dv
        dw = weight_grads_row.get(j)
        if dw is not None:
            grad += 2.0 * w * (g * g) * np.asarray(dw, dtype=float)
    return -slope * grad


def saturate(v: np.ndarray, v_max: float) -> np.ndarray:
    """Scale v down to norm v_max if it exceeds it (direction preserved)."""
    norm = float(np.linalg.norm(v))
    if norm > v_max > 0.0:
        return v * (v_max / norm)
    return v


@dataclass(frozen=True)
class ExogenousSegment:
    """A constant steering velocity on the half-open interval [t_start, t_end)."""

    t_start: float
    t_end: float
    velocity: tuple[float, float, float]


def exogenous_velocity(
    segments: Sequence[ExogenousSegment], t: float, cap: float
) -> np.ndarray:
    """Active steering velocity at time t, norm-capped; zero outside segments."""
    for seg in segments:
        if seg.t_start <= t < seg.t_end:
            return saturate(np.array(seg.velocity, dtype=float), cap)
    return np.zeros(3)


def apply_exogenous(
    xi: np.ndarray, segments: Sequence[ExogenousSegment], t: float, cap: float
) -> np.ndarray:
    """Add the scheduled mission velocity to the rigidity command."""
    return xi + exogenous_velocity(segments, t, cap)
