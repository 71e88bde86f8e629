"""Rigidity algebra for weighted frameworks in 3-D.

A framework is a graph G together with a position matrix p(V); a weighted
framework adds one weight per edge.  The central objects are

* the rigidity matrix R(p) (m x 3n), one row per edge e_k = (u, v):
  (p_u - p_v)^T in u's coordinate block, the negation in v's block;
* the weighted rigidity matrix W R(p) and the symmetric rigidity matrix
  R(p)^T W^2 R(p) (3n x 3n, PSD), whose eigenvalues are studied throughout;
* the six-dimensional trivial-motion space (translations + infinitesimal
  rotations) spanned by the columns of T;
* the rigidity eigenvalue lambda_7: the 7th-smallest eigenvalue of the
  symmetric matrix.  The framework is infinitesimally rigid iff lambda_7 > 0,
  equivalently iff rank W R(p) = 3n - 6.

Vectors over agent coordinates are stored "interleaved": index 3i+s is agent
i's coordinate s.  The coordinate-grouping permutation P re-sorts to all-x,
all-y, all-z blocks; conjugating by it exposes the incidence-weighted product
form of the symmetric matrix.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Mapping

import numpy as np

from .graphs import Graph, check_positions, incidence_matrix, local_incidence_matrix

#: Weighted edges at or below this weight are dropped from the unweighted counterpart.
TAU_WEIGHT = 1e-12
#: lambda_7 above this counts as rigid.
TAU_RIGID = 1e-7
#: Relative singular-value cutoff for numeric rank.
RANK_RTOL = 1e-8


class CollinearConfiguration(ValueError):
    """All agents lie on one line: the trivial-motion basis degenerates."""


@dataclass
class WeightedFramework:
    """Graph + positions + one nonnegative weight per edge."""

    graph: Graph
    positions: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        self.positions = check_positions(self.positions, self.graph.n)
        w = np.asarray(self.weights, dtype=float)
        if w.shape != (self.graph.m,):
            raise ValueError(f"need {self.graph.m} edge weights, got shape {w.shape}")
        if not np.isfinite(w).all() or (w < 0).any():
            raise ValueError("weights must be finite and nonnegative")
        self.weights = w

    @property
    def n(self) -> int:
        return self.graph.n


def rigidity_matrix(graph: Graph, positions: np.ndarray) -> np.ndarray:
    """R(p), directly from the row pattern."""
    p = np.asarray(positions, dtype=float)
    R = np.zeros((graph.m, 3 * graph.n))
    for k, (u, v) in enumerate(graph.edges):
        d = p[u] - p[v]
        R[k, 3 * u : 3 * u + 3] = d
        R[k, 3 * v : 3 * v + 3] = -d
    return R


def rigidity_matrix_local_form(graph: Graph, positions: np.ndarray) -> np.ndarray:
    """R(p) assembled from the local incidence matrices.

    Stacks [E_l(G_1)^T ... E_l(G_n)^T] against I_n (x) p(V): vertex j's block of
    columns is E_l(G_j)^T p(V).  Identical (not just equal-up-to-tolerance) to
    :func:`rigidity_matrix`; kept as an independent construction for testing.
    """
    p = np.asarray(positions, dtype=float)
    R = np.zeros((graph.m, 3 * graph.n))
    for j in range(graph.n):
        R[:, 3 * j : 3 * j + 3] = local_incidence_matrix(graph, j).T @ p
    return R


def weighted_rigidity_matrix(fw: WeightedFramework) -> np.ndarray:
    """W R(p): each row of R(p) scaled by its edge weight."""
    return fw.weights[:, None] * rigidity_matrix(fw.graph, fw.positions)


def symmetric_rigidity_matrix(fw: WeightedFramework) -> np.ndarray:
    """R(p)^T W^2 R(p), the symmetric PSD matrix whose spectrum we track."""
    Rw = weighted_rigidity_matrix(fw)
    return Rw.T @ Rw


def unweighted_counterpart(fw: WeightedFramework, tau: float = TAU_WEIGHT) -> Graph:
    """Graph keeping only edges with weight above ``tau`` (stable edge order)."""
    kept = [e for e, w in zip(fw.graph.edges, fw.weights) if w > tau]
    return Graph(fw.graph.n, kept, preserve_order=True)


def coordinate_permutation(n: int) -> np.ndarray:
    """P: interleaved agent coordinates -> grouped x / y / z blocks (3n x 3n)."""
    blocks = [np.kron(np.eye(n), np.eye(3)[s : s + 1]) for s in range(3)]
    return np.vstack(blocks)


def permuted_laplacian_form(fw: WeightedFramework) -> np.ndarray:
    """The incidence-weighted product form of P R P^T.

    Builds (I_3 (x) E W) Q (I_3 (x) W E^T) where Q's nine m x m diagonal blocks
    are products Q_a Q_b of per-edge coordinate differences taken in the global
    orientation.  Equals P (R^T W^2 R) P^T up to roundoff.
    """
    E = incidence_matrix(fw.graph)
    EW = E * fw.weights[None, :]
    p = fw.positions
    tails = [u for u, _ in fw.graph.edges]
    heads = [v for _, v in fw.graph.edges]
    d = p[tails] - p[heads]  # (m, 3) per-edge differences
    A = np.kron(np.eye(3), EW)
    Q = np.block([[np.diag(d[:, a] * d[:, b]) for b in range(3)] for a in range(3)])
    return A @ Q @ A.T


def trivial_motion_basis(positions: np.ndarray, center: np.ndarray | None = None) -> np.ndarray:
    """T: 3n x 6 matrix of translations and infinitesimal rotations.

    Columns (interleaved layout, per-agent rows shown):
      t1=(1,0,0)  t2=(0,1,0)  t3=(0,0,1)
      t4=(p^y_c, -p^x_c, 0)   t5=(p^z_c, 0, -p^x_c)   t6=(0, p^z_c, -p^y_c)
    with p^s_c = p^s - center^s; ``center=None`` uses the origin.  Raises
    :class:`CollinearConfiguration` when the columns lose rank, which happens
    exactly when every agent lies on a single line.
    """
    p = check_positions(positions)
    n = p.shape[0]
    if center is not None:
        p = p - np.asarray(center, dtype=float)[None, :]
    T = np.zeros((3 * n, 6))
    T[0::3, 0] = 1.0
    T[1::3, 1] = 1.0
    T[2::3, 2] = 1.0
    T[0::3, 3] = p[:, 1]
    T[1::3, 3] = -p[:, 0]
    T[0::3, 4] = p[:, 2]
    T[2::3, 4] = -p[:, 0]
    T[1::3, 5] = p[:, 2]
    T[2::3, 5] = -p[:, 1]
    s = np.linalg.svd(T, compute_uv=False)
    if s[5] <= RANK_RTOL * s[0]:
        raise CollinearConfiguration("agents are collinear; trivial motions drop rank")
    return T


# backwards-friendly alias: the six columns span the null space of every
# rigidity matrix built on the same positions
null_space_basis = trivial_motion_basis


@dataclass
class RigidityReport:
    """Spectral summary of a weighted framework."""

    n: int
    m: int
    eigenvalues: np.ndarray  # ascending, length 3n
    lambda7: float
    lambda8: float
    gap: float
    eigvec7: np.ndarray  # unit 3n-vector for lambda7 (interleaved layout)
    rank: int
    is_rigid: bool

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "m": self.m,
            "lambda7": self.lambda7,
            "lambda8": self.lambda8,
            "gap": self.gap,
            "rank": self.rank,
            "rank_required": 3 * self.n - 6,
            "is_rigid": self.is_rigid,
            "eigenvalues": [float(x) for x in self.eigenvalues],
            "eigvec7": [float(x) for x in self.eigvec7],
        }


def rigidity_report(
    fw: WeightedFramework,
    rank_rtol: float = RANK_RTOL,
    tau_rigid: float = TAU_RIGID,
) -> RigidityReport:
    """Eigen-decompose the symmetric rigidity matrix and judge rigidity.

    lambda_7 comes from a symmetric eigendecomposition; the rank comes from an
    independent SVD of the weighted rigidity matrix (singular values above
    ``rank_rtol`` times the largest).  Reports, never throws: degenerate inputs
    simply yield a non-rigid verdict.
    """
    M = symmetric_rigidity_matrix(fw)
    vals, vecs = np.linalg.eigh(M)
    lam7 = float(vals[6])
    lam8 = float(vals[7]) if len(vals) > 7 else float("nan")
    sv = np.linalg.svd(weighted_rigidity_matrix(fw), compute_uv=False)
    if sv.size and sv[0] > 0.0:
        rank = int(np.sum(sv > rank_rtol * sv[0]))
    else:
        rank = 0
    return RigidityReport(
        n=fw.graph.n,
        m=fw.graph.m,
        eigenvalues=vals,
        lambda7=lam7,
        lambda8=lam8,
        gap=lam8 - lam7,
        eigvec7=vecs[:, 6].copy(),
        rank=rank,
        is_rigid=lam7 > tau_rigid,
    )


def as_agent_rows(v: np.ndarray, n: int) -> np.ndarray:
    """Interleaved 3n-vector -> (n, 3) per-agent rows (no copy if possible)."""
    v = np.asarray(v, dtype=float)
    if v.shape == (n, 3):
        return v
    return v.reshape(n, 3)


def edge_quadratic(p_i, p_j, v_i, v_j) -> float:
    """S_ij = [(p_i - p_j) . (v_i - v_j)]^2.

    The per-edge ingredient of the quadratic form v^T (R^T W^2 R) v; stated on
    raw vectors so it can be evaluated on estimated quantities as well.
    """
    g = float(np.dot(np.asarray(p_i) - np.asarray(p_j), np.asarray(v_i) - np.asarray(v_j)))
    return g * g


def quadratic_form_by_edges(fw: WeightedFramework, v: np.ndarray) -> float:
    """v^T (R^T W^2 R) v assembled edge by edge: sum_k W_k^2 S_k."""
    rows = as_agent_rows(v, fw.graph.n)
    p = fw.positions
    total = 0.0
    for k, (u, w) in enumerate(fw.graph.edges):
        total += fw.weights[k] ** 2 * edge_quadratic(p[u], p[w], rows[u], rows[w])
    return total


EdgeWeightGradients = Callable[[int], Mapping[int, np.ndarray]]
"""Callback: edge index k -> {vertex i: d W_k / d p_i (3-vector)} for every
vertex the weight actually depends on.  Omitted vertices mean an exactly zero
gradient."""


def lambda7_gradient(
    fw: WeightedFramework,
    eigvec: np.ndarray,
    edge_weight_gradients: EdgeWeightGradients | None = None,
) -> np.ndarray:
    """Analytic gradient of lambda_7 with respect to every agent position.

    For a unit eigenvector v of the symmetric rigidity matrix at a simple
    eigenvalue, d lambda / d p follows from differentiating
    sum_k W_k^2 g_k^2 with g_k = (p_u - p_v).(v_u - v_v):

      row u += 2 W_k^2 g_k (v_u - v_v),   row v -= the same,
      row i += 2 W_k (d W_k / d p_i) S_k  for every i the weight sees.

    The weight term covers third-party couplings (inter-agent clearance factors
    make W_uv depend on positions beyond u and v), so the result matches finite
    differences of the full weight-closed lambda_7.  ``edge_weight_gradients``
    None treats the weights as position-independent.
    """
    n = fw.graph.n
    rows = as_agent_rows(eigvec, n)
    p = fw.positions
    grad = np.zeros((n, 3))
    for k, (u, v) in enumerate(fw.graph.edges):
        dv = rows[u] - rows[v]
        g = float(np.dot(p[u] - p[v], dv))
        wk = fw.weights[k]
        coef = 2.0 * wk * wk * g
        grad[u] += coef * dv
        grad[v] -= coef * dv
        if edge_weight_gradients is not None and wk > 0.0:
            S = g * g
            for i, dw in edge_weight_gradients(k).items():
                grad[i] += 2.0 * wk * S * np.asarray(dw, dtype=float)
    return grad
