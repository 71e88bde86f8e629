#!/usr/bin/env python3
"""Stress the analytic gradients against central finite differences.

Covers both layers: the eigenvalue gradient d(lambda_7)/dp with the full
position-dependent weight model closed over it (third-party clearance couplings
included), and the raw single-weight gradient dW_uv/dp away from the model's
kink lines.  Prints worst-case relative errors and the translation-invariance
check (the gradient rows of lambda_7 must sum to zero per coordinate).
"""

import argparse

import numpy as np

from swarmrigid.graphs import complete_graph
from swarmrigid.rigidity import (
    WeightedFramework,
    lambda7_gradient,
    rigidity_report,
    symmetric_rigidity_matrix,
)
from swarmrigid.weights import (
    WeightParams,
    edge_weight_gradient_map,
    edge_weights,
    weight,
    weight_gradient,
)

WEIGHTS = WeightParams(D=6.0, l_min=1.0, l_0=4.0, delta_a=1.5, delta_b=1.0, sigma_beta=2.0)
NO_OBS = np.zeros((0, 3))


def shape_positions(seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    if seed % 2 == 0:
        base = 2.6 * np.array(
            [[1.0, 0, 0], [-1, 0, 0], [0, 1, 0], [0, -1, 0], [0, 0, 1], [0, 0, -1]]
        )
        return base + rng.uniform(-0.3, 0.3, size=base.shape)
    corners = [[x, y, z] for x in (0.0, 1) for y in (0.0, 1) for z in (0.0, 1)]
    return 1.9 * np.asarray(corners) + rng.uniform(-0.25, 0.25, size=(8, 3))


def fd_lambda7(p: np.ndarray, h: float = 1e-6) -> np.ndarray:
    g = complete_graph(p.shape[0])
    out = np.zeros_like(p)
    for i in range(p.shape[0]):
        for s in range(3):
            for sign in (1.0, -1.0):
                q = p.copy()
                q[i, s] += sign * h
                w = edge_weights(g, q, NO_OBS, WEIGHTS)
                lam = np.linalg.eigvalsh(
                    symmetric_rigidity_matrix(WeightedFramework(g, q, w))
                )[6]
                out[i, s] += sign * lam / (2 * h)
    return out


def check_lambda7(count: int) -> None:
    worst_rel, worst_sum, used, seed = 0.0, 0.0, 0, 0
    while used < count:
        p = shape_positions(seed)
        seed += 1
        g = complete_graph(p.shape[0])
        fw = WeightedFramework(g, p, edge_weights(g, p, NO_OBS, WEIGHTS))
        rep = rigidity_report(fw)
        if not rep.is_rigid or rep.gap <= 0.1:
            continue
        analytic = lambda7_gradient(
            fw, rep.eigvec7, edge_weight_gradient_map(g, p, NO_OBS, WEIGHTS)
        )
        fd = fd_lambda7(p)
        worst_rel = max(
            worst_rel, float(np.linalg.norm(fd - analytic) / np.linalg.norm(analytic))
        )
        worst_sum = max(worst_sum, float(np.max(np.abs(analytic.sum(axis=0)))))
        used += 1
    print(f"lambda_7 gradient, {used} frameworks (gap > 0.1):")
    print(f"  worst relative FD error      {worst_rel:.3e}")
    print(f"  worst translation-sum        {worst_sum:.3e}")


def check_weights(count: int) -> None:
    rng = np.random.default_rng(99)
    corners = (WEIGHTS.l_min, WEIGHTS.l_min + WEIGHTS.delta_b,
               WEIGHTS.D - WEIGHTS.delta_a, WEIGHTS.D)
    worst, used = 0.0, 0
    while used < count:
        p = rng.uniform(-3.5, 3.5, size=(5, 3))
        obs = rng.uniform(-3.5, 3.5, size=(1, 3))
        dists = [np.linalg.norm(p[a] - p[k]) for a in (0, 1) for k in range(5) if k != a]
        dists += [np.linalg.norm(p[a] - obs[0]) for a in (0, 1)]
        if any(abs(d - c) < 2e-3 for d in dists for c in corners):
            continue
        if weight(0, 1, p, obs, WEIGHTS) < 1e-6:
            continue
        for wrt in range(5):
            fd = np.zeros(3)
            for s in range(3):
                for sign in (1.0, -1.0):
                    q = p.copy()
                    q[wrt, s] += sign * 1e-6
                    fd[s] += sign * weight(0, 1, q, obs, WEIGHTS) / 2e-6
            if np.linalg.norm(fd) < 1e-9:
                continue
            a = weight_gradient(0, 1, p, obs, WEIGHTS, wrt)
            worst = max(worst, float(np.linalg.norm(a - fd) / np.linalg.norm(fd)))
        used += 1
    print(f"single-weight gradient, {used} kink-free configs (1 obstacle):")
    print(f"  worst relative FD error      {worst:.3e}")


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--frameworks", type=int, default=20)
    ap.add_argument("--weight-configs", type=int, default=30)
    args = ap.parse_args()
    check_lambda7(args.frameworks)
    check_weights(args.weight_configs)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
