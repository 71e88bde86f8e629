"""Closed-loop simulator: kinematic agents, message-passing estimators, controller.

One control tick advances the world by dt_ctrl and runs, in order:

1. world snapshot: true distances, candidate sets, pair weights, the active
   (positive-weight) topology, and oracle diagnostics of the true framework;
2. measurements: ranges per pair (optionally noisy, one shared sample per
   undirected pair) and the two anchor agents' relative vectors to i_c;
3. packet publication to the instrumented message bus;
4. N_sub estimator substeps at dt_est (synchronous: every agent steps from the
   same packet snapshot, then packets are re-published);
5. control commands (suppressed during warm-up) plus exogenous steering, then
   norm saturation;
6. forward-Euler integration of the agent positions;
7. fresh oracle diagnostics and safety monitors at the new positions;
8. trace append: one record per agent.

Agents receive data exclusively through the bus, which only serves packets from
the tick's declared neighbor set and counts every read, so locality violations
are observable rather than merely stylistic.  Runs are deterministic for a
fixed scenario (seeded RNG, fixed iteration order): the written trace is
byte-identical across repeats.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np

from .controller import (
    ExogenousSegment,
    PotentialParams,
    apply_exogenous,
    control_velocity,
    is_clamped,
    saturate,
)
from .estimators import (
    Gains,
    NeighborPacket,
    PiFilterState,
    PositionEstimatorState,
    RigidityEstimatorState,
    consensus_outputs,
    eigenvalue_from_mean_square,
    init_rigidity_state,
    local_inputs,
    make_packet,
    pi_consensus_step,
    position_estimator_step,
    power_iteration_step,
    rigidity_eigenvalue_estimate,
)
from .graphs import (
    Graph,
    check_obstacles,
    check_positions,
    complete_graph,
    distance_matrix,
    point_obstacle_distance,
)
from .rigidity import (
    CollinearConfiguration,
    RigidityReport,
    WeightedFramework,
    as_agent_rows,
    rigidity_report,
    trivial_motion_basis,
)
from . import weights as wmod
from .weights import WeightParams, candidate_set

SCHEMA_VERSION = 1
#: Safety monitors flag clearances this far below l_min.
BREACH_TOL = 0.05
#: Weights at or below this do not count as edges.
TAU_WEIGHT = 1e-12
#: Triangle area below which the anchor pair is considered degenerate.
DEGENERATE_AREA = 1e-6

TRACE_COLUMNS = (
    "t", "agent", "px", "py", "pz", "phx", "phy", "phz",
    "vhx", "vhy", "vhz", "lam7_hat", "lam7_true", "lam8_true",
    "pos_err", "e_lambda", "n_edges", "clamped", "breach",
)
_INT_COLUMNS = {"agent", "n_edges", "clamped", "breach"}


class ScenarioRejected(Exception):
    """The scenario fails validation or the initial-rigidity assumption."""


_TOP_LEVEL_KEYS = {
    "schema_version", "n", "positions", "edges", "obstacles", "i_c",
    "weights", "gains", "potential", "dt_ctrl", "dt_est", "duration",
    "seed", "t_warm", "v_max", "exo_cap", "p_hat_jitter", "exogenous",
    "modes", "noise",
}


@dataclass
class Scenario:
    """Everything a run needs; see :func:`Scenario.from_dict` for the JSON form."""

    positions: np.ndarray
    weights: WeightParams
    gains: Gains
    potential: PotentialParams
    edges: list[tuple[int, int]] | None = None
    obstacles: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))
    i_c: int = 0
    dt_ctrl: float = 0.01
    dt_est: float = 0.001
    duration: float = 10.0
    seed: int = 0
    t_warm: float = 2.0
    v_max: float = 1.0
    exo_cap: float = 1.0
    p_hat_jitter: float = 0.05
    exogenous: dict[int, tuple[ExogenousSegment, ...]] = field(default_factory=dict)
    oracle_consensus: bool = False
    oracle_eigenpair: bool = False
    sigma_range: float = 0.0
    sigma_bearing: float = 0.0

    @property
    def n(self) -> int:
        return int(self.positions.shape[0])

    @property
    def n_sub(self) -> int:
        return int(round(self.dt_ctrl / self.dt_est))

    @property
    def n_ticks(self) -> int:
        return int(round(self.duration / self.dt_ctrl))

    def base_graph(self) -> Graph:
        if self.edges is None:
            return complete_graph(self.n)
        return Graph(self.n, self.edges, preserve_order=True)

    def validate(self) -> RigidityReport:
        """Structural checks plus the initial-rigidity gate.

        Returns the initial oracle report; raises :class:`ScenarioRejected`
        with a reason otherwise.
        """
        try:
            self.positions = check_positions(self.positions)
            self.obstacles = check_obstacles(self.obstacles)
            graph = self.base_graph()
        except ValueError as exc:
            raise ScenarioRejected(str(exc)) from exc
        n = self.n
        if not (0 <= self.i_c < n):
            raise ScenarioRejected(f"i_c={self.i_c} out of range for n={n}")
        if self.dt_ctrl <= 0.0 or self.dt_est <= 0.0 or self.dt_est > self.dt_ctrl:
            raise ScenarioRejected("need 0 < dt_est <= dt_ctrl")
        ratio = self.dt_ctrl / self.dt_est
        if abs(ratio - round(ratio)) > 1e-9:
            raise ScenarioRejected("dt_ctrl must be an integer multiple of dt_est")
        if self.duration < 0.0:
            raise ScenarioRejected("duration must be nonnegative")
        if self.t_warm < 0.0 or self.v_max <= 0.0 or self.exo_cap < 0.0:
            raise ScenarioRejected("t_warm >= 0, v_max > 0, exo_cap >= 0 required")
        if self.p_hat_jitter < 0.0:
            raise ScenarioRejected("p_hat_jitter must be nonnegative")
        if self.sigma_range < 0.0 or self.sigma_bearing < 0.0:
            raise ScenarioRejected("noise levels must be nonnegative")
        for agent, segs in self.exogenous.items():
            if not (0 <= agent < n):
                raise ScenarioRejected(f"exogenous agent {agent} out of range")
            for seg in segs:
                if not (seg.t_start < seg.t_end):
                    raise ScenarioRejected("exogenous segments need t_start < t_end")
                if not all(math.isfinite(c) for c in seg.velocity):
                    raise ScenarioRejected("exogenous velocities must be finite")
        try:
            trivial_motion_basis(self.positions, self.positions[self.i_c])
        except CollinearConfiguration as exc:
            raise ScenarioRejected(f"initial configuration rejected: {exc}") from exc
        w = wmod.edge_weights(graph, self.positions, self.obstacles, self.weights)
        report = rigidity_report(WeightedFramework(graph, self.positions, w))
        if report.lambda7 <= self.potential.lambda_min:
            raise ScenarioRejected(
                "initial rigidity eigenvalue "
                f"{report.lambda7:.6g} is not above the threshold "
                f"{self.potential.lambda_min:.6g}"
            )
        return report

    # ---------------------------------------------------------------- JSON I/O

    @classmethod
    def from_dict(cls, data: dict) -> "Scenario":
        if not isinstance(data, dict):
            raise ScenarioRejected("scenario must be a JSON object")
        unknown = set(data) - _TOP_LEVEL_KEYS
        if unknown:
            raise ScenarioRejected(f"unknown scenario keys: {sorted(unknown)}")
        version = data.get("schema_version", SCHEMA_VERSION)
        if version != SCHEMA_VERSION:
            raise ScenarioRejected(f"unsupported schema_version {version}")
        for key in ("positions", "weights", "gains", "potential"):
            if key not in data:
                raise ScenarioRejected(f"scenario is missing required key '{key}'")
        try:
            positions = np.asarray(data["positions"], dtype=float)
            if "n" in data and int(data["n"]) != positions.shape[0]:
                raise ScenarioRejected(
                    f"n={data['n']} does not match {positions.shape[0]} positions"
                )
            wp = data["weights"]
            weights = WeightParams(
                D=float(wp["D"]), l_min=float(wp["l_min"]), l_0=float(wp["l_0"]),
                delta_a=float(wp["delta_a"]), delta_b=float(wp["delta_b"]),
                sigma_beta=float(wp["sigma_beta"]),
            )
            gp = data["gains"]
            gains = Gains(
                k1=float(gp["k1"]), k2=float(gp["k2"]), k3=float(gp["k3"]),
                kp=float(gp["K_P"]), ki=float(gp["K_I"]),
                gamma=float(gp["gamma"]), eta_pos=float(gp["eta_pos"]),
            )
            pp = data["potential"]
            potential = PotentialParams(
                lambda_min=float(pp["lambda_min"]), b=float(pp["b"]),
                eps_clamp=float(pp["eps_clamp"]),
            )
            edges = None
            if data.get("edges") is not None:
                edges = [(int(u), int(v)) for u, v in data["edges"]]
            exogenous: dict[int, tuple[ExogenousSegment, ...]] = {}
            for key, segs in (data.get("exogenous") or {}).items():
                exogenous[int(key)] = tuple(
                    ExogenousSegment(
                        t_start=float(s["t_start"]), t_end=float(s["t_end"]),
                        velocity=(float(s["vx"]), float(s["vy"]), float(s["vz"])),
                    )
                    for s in segs
                )
            modes = data.get("modes") or {}
            noise = data.get("noise") or {}
            kwargs = {}
            for name in ("i_c", "seed"):
                if name in data:
                    kwargs[name] = int(data[name])
            for name in ("dt_ctrl", "dt_est", "duration", "t_warm", "v_max",
                         "exo_cap", "p_hat_jitter"):
                if name in data:
                    kwargs[name] = float(data[name])
            return cls(
                positions=positions,
                weights=weights,
                gains=gains,
                potential=potential,
                edges=edges,
                obstacles=check_obstacles(data.get("obstacles")),
                exogenous=exogenous,
                oracle_consensus=bool(modes.get("oracle_consensus", False)),
                oracle_eigenpair=bool(modes.get("oracle_eigenpair", False)),
                sigma_range=float(noise.get("sigma_range", 0.0)),
                sigma_bearing=float(noise.get("sigma_bearing", 0.0)),
                **kwargs,
            )
        except ScenarioRejected:
            raise
        except (KeyError, TypeError, ValueError) as exc:
            raise ScenarioRejected(f"malformed scenario: {exc}") from exc

    def to_dict(self) -> dict:
        out: dict = {
            "schema_version": SCHEMA_VERSION,
            "n": self.n,
            "positions": self.positions.tolist(),
            "i_c": self.i_c,
            "weights": {
                "D": self.weights.D, "l_min": self.weights.l_min,
                "l_0": self.weights.l_0, "delta_a": self.weights.delta_a,
                "delta_b": self.weights.delta_b, "sigma_beta": self.weights.sigma_beta,
            },
            "gains": {
                "k1": self.gains.k1, "k2": self.gains.k2, "k3": self.gains.k3,
                "K_P": self.gains.kp, "K_I": self.gains.ki,
                "gamma": self.gains.gamma, "eta_pos": self.gains.eta_pos,
            },
            "potential": {
                "lambda_min": self.potential.lambda_min, "b": self.potential.b,
                "eps_clamp": self.potential.eps_clamp,
            },
            "dt_ctrl": self.dt_ctrl, "dt_est": self.dt_est,
            "duration": self.duration, "seed": self.seed, "t_warm": self.t_warm,
            "v_max": self.v_max, "exo_cap": self.exo_cap,
            "p_hat_jitter": self.p_hat_jitter,
            "modes": {
                "oracle_consensus": self.oracle_consensus,
                "oracle_eigenpair": self.oracle_eigenpair,
            },
            "noise": {"sigma_range": self.sigma_range, "sigma_bearing": self.sigma_bearing},
        }
        if self.edges is not None:
            out["edges"] = [list(e) for e in self.edges]
        if self.obstacles.shape[0]:
            out["obstacles"] = self.obstacles.tolist()
        if self.exogenous:
            out["exogenous"] = {
                str(a): [
                    {"t_start": s.t_start, "t_end": s.t_end,
                     "vx": s.velocity[0], "vy": s.velocity[1], "vz": s.velocity[2]}
                    for s in segs
                ]
                for a, segs in self.exogenous.items()
            }
        return out

    @classmethod
    def load(cls, path) -> "Scenario":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2)
            fh.write("\n")


def apply_overrides(data: dict, overrides: Iterable[str]) -> dict:
    """Apply ``dotted.path=value`` overrides to a raw scenario dict.

    Values are parsed as JSON when possible, else kept as strings.  New leaves
    may be created; intermediate path elements must be objects.
    """
    for item in overrides:
        if "=" not in item:
            raise ValueError(f"override '{item}' is not of the form key=value")
        path, raw = item.split("=", 1)
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        keys = path.split(".")
        node = data
        for key in keys[:-1]:
            nxt = node.get(key)
            if nxt is None:
                nxt = node[key] = {}
            if not isinstance(nxt, dict):
                raise ValueError(f"override path '{path}' crosses non-object '{key}'")
            node = nxt
        node[keys[-1]] = value
    return data


# ------------------------------------------------------------------ messaging


class MessageBus:
    """Neighbor-limited packet delivery with read accounting.

    The engine declares the tick's topology; deliveries outside it are refused
    and counted as violations.  ``reads`` counts every served packet, so a test
    can assert that all estimator traffic went through this choke point.
    """

    def __init__(self, audit: bool = False):
        self.audit = audit
        self.reads = 0
        self.violations = 0
        self._topology: dict[int, tuple[int, ...]] = {}
        self._packets: dict[int, NeighborPacket] = {}

    def set_topology(self, neighbors: Mapping[int, tuple[int, ...]]) -> None:
        self._topology = {i: tuple(js) for i, js in neighbors.items()}

    def publish(self, packets: Mapping[int, NeighborPacket]) -> None:
        self._packets = dict(packets)

    def deliver(self, receiver: int, senders: Iterable[int] | None = None) -> dict[int, NeighborPacket]:
        allowed = self._topology.get(receiver, ())
        wanted = allowed if senders is None else tuple(senders)
        out: dict[int, NeighborPacket] = {}
        for j in wanted:
            if j not in allowed:
                self.violations += 1
                continue
            pkt = self._packets.get(j)
            if pkt is not None:
                out[j] = pkt
                self.reads += 1
        return out


@dataclass
class AgentCell:
    """One agent's local state: estimators only; truth stays in the engine."""

    index: int
    pos: PositionEstimatorState
    rig: RigidityEstimatorState


@dataclass
class WorldSnapshot:
    """True-geometry quantities for one tick, plus oracle diagnostics."""

    dist: np.ndarray            # (n, n) true distances
    cand: list[list[int]]       # candidate sets S_u
    W: np.ndarray               # (n, n) pair weights on the base edge set
    neighbors: list[tuple[int, ...]]
    active_edges: list[tuple[int, int]]
    report: RigidityReport      # oracle spectrum of the true weighted framework

    @property
    def n_edges(self) -> int:
        return len(self.active_edges)


@dataclass
class Measurements:
    """Per-tick sensor values shared with the agents."""

    dist: np.ndarray                     # (n, n) measured ranges (= true if noise-free)
    W: np.ndarray                        # (n, n) measured pair weights
    anchors: dict[int, np.ndarray]       # anchor agent -> measured p_i - p_ic


# ------------------------------------------------------------------- trace


class Trace:
    """Row-per-(tick, agent) run record with CSV round-tripping."""

    def __init__(self, n: int, rows: list[tuple] | None = None):
        self.n = n
        self.rows: list[tuple] = rows if rows is not None else []

    def append(self, row: tuple) -> None:
        self.rows.append(row)

    def column(self, name: str) -> np.ndarray:
        idx = TRACE_COLUMNS.index(name)
        return np.array([row[idx] for row in self.rows], dtype=float)

    def series(self, name: str) -> np.ndarray:
        """(n_records, n) view of a column, one row per tick record."""
        return self.column(name).reshape(-1, self.n)

    def times(self) -> np.ndarray:
        return self.series("t")[:, 0]

    def write_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(",".join(TRACE_COLUMNS) + "\n")
            for row in self.rows:
                cells = []
                for name, value in zip(TRACE_COLUMNS, row):
                    if name in _INT_COLUMNS:
                        cells.append(str(int(value)))
                    else:
                        cells.append(format(float(value), ".9g"))
                fh.write(",".join(cells) + "\n")

    @classmethod
    def read_csv(cls, path) -> "Trace":
        with open(path, "r", encoding="utf-8") as fh:
            header = fh.readline().strip().split(",")
            if header != list(TRACE_COLUMNS):
                raise ValueError(f"unexpected trace header: {header}")
            rows = []
            agents = set()
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                parts = line.split(",")
                if len(parts) != len(TRACE_COLUMNS):
                    raise ValueError("trace row has wrong number of columns")
                row = tuple(float(x) for x in parts)
                agents.add(int(row[1]))
                rows.append(row)
        if not rows:
            raise ValueError("trace has no rows")
        return cls(n=len(agents), rows=rows)


# ------------------------------------------------------------------ simulation


class Simulation:
    """Executes a scenario tick by tick; see the module docstring for phases."""

    def __init__(self, scenario: Scenario, audit: bool = False):
        self.scn = scenario
        self.initial_report = scenario.validate()
        self.graph = scenario.base_graph()
        self.p = scenario.positions.copy()
        self.rng = np.random.default_rng(scenario.seed)
        self.bus = MessageBus(audit=audit)
        self.tick_index = 0
        self.t = 0.0

        n = scenario.n
        rel = self.p - self.p[scenario.i_c]
        jitter = scenario.p_hat_jitter * self.rng.uniform(-1.0, 1.0, size=(n, 3))
        jitter[scenario.i_c] = 0.0
        v0 = self.rng.standard_normal(3 * n)
        T = trivial_motion_basis(self.p, self.p[scenario.i_c])
        coef, *_ = np.linalg.lstsq(T, v0, rcond=None)
        v0 = v0 - T @ coef
        v0 *= 0.9 * math.sqrt(3 * n) / np.linalg.norm(v0)
        vrows = as_agent_rows(v0, n)
        self.cells = [
            AgentCell(
                index=i,
                pos=PositionEstimatorState(p_hat=rel[i] + jitter[i]),
                rig=init_rigidity_state(vrows[i], rel[i] + jitter[i]),
            )
            for i in range(n)
        ]
        self.bound_limit = max(float(np.linalg.norm(v0)), math.sqrt(3 * n)) + 1e-3

        self.breach_events = 0
        self.bound_violations = 0
        self.clamp_events = 0
        self.degenerate_special_ticks = 0
        self.trace = Trace(n)
        self.snapshot = self._compute_snapshot()
        self._append_records(clamped=[0] * n)

    # ------------------------------------------------------------- snapshots

    def _compute_snapshot(self) -> WorldSnapshot:
        scn = self.scn
        dist = distance_matrix(self.p)
        cand = [candidate_set(u, self.p, scn.obstacles, scn.weights) for u in range(scn.n)]
        W = wmod.pair_weights(
            self.p, scn.obstacles, scn.weights,
            candidate_sets=cand, pairs=list(self.graph.edges),
        )
        neighbors = [
            tuple(j for j in range(scn.n) if W[i, j] > TAU_WEIGHT) for i in range(scn.n)
        ]
        active = [(u, v) for u, v in self.graph.edges if W[u, v] > TAU_WEIGHT]
        w_edges = np.array([W[u, v] for u, v in self.graph.edges])
        report = rigidity_report(WeightedFramework(self.graph, self.p, w_edges))
        return WorldSnapshot(
            dist=dist, cand=cand, W=W, neighbors=neighbors,
            active_edges=active, report=report,
        )

    # ---------------------------------------------------------- measurements

    def _measure(self, snap: WorldSnapshot) -> Measurements:
        scn = self.scn
        n = scn.n
        if scn.sigma_range > 0.0:
            dist = snap.dist.copy()
            for u in range(n):
                for v in range(u + 1, n):
                    noisy = snap.dist[u, v] + scn.sigma_range * self.rng.normal()
                    dist[u, v] = dist[v, u] = max(noisy, 0.0)
            W = self._measured_pair_weights(dist, snap)
        else:
            dist = snap.dist
            W = snap.W

        anchors: dict[int, np.ndarray] = {}
        nbrs_c = snap.neighbors[scn.i_c]
        if len(nbrs_c) >= 2:
            pc = self.p[scn.i_c]
            best_area = -1.0
            best: tuple[int, int] | None = None
            for a_idx in range(len(nbrs_c)):
                for b_idx in range(a_idx + 1, len(nbrs_c)):
                    a, b = nbrs_c[a_idx], nbrs_c[b_idx]
                    area = 0.5 * float(
                        np.linalg.norm(np.cross(self.p[a] - pc, self.p[b] - pc))
                    )
                    if area > best_area + 1e-15:
                        best_area, best = area, (a, b)
            if best is not None and best_area >= DEGENERATE_AREA:
                for a in best:
                    vec = self.p[a] - pc
                    if scn.sigma_bearing > 0.0:
                        vec = vec + scn.sigma_bearing * self.rng.standard_normal(3)
                    anchors[a] = vec
            else:
                self.degenerate_special_ticks += 1
        else:
            self.degenerate_special_ticks += 1
        return Measurements(dist=dist, W=W, anchors=anchors)

    def _measured_pair_weights(self, dist: np.ndarray, snap: WorldSnapshot) -> np.ndarray:
        """Pair weights with measured ranges in every distance-driven factor.

        Segment and point obstacle clearances keep true geometry (obstacles are
        sensed directly); candidate sets follow the true topology.
        """
        scn = self.scn
        n = scn.n
        W = np.zeros((n, n))
        for u, v in self.graph.edges:
            ell = dist[u, v]
            w = wmod.gamma_a(ell, scn.weights)
            if w == 0.0:
                continue
            clr = wmod._segment_clearance(self.p[u], self.p[v], scn.obstacles)[0]
            w *= wmod.gamma_b(clr, scn.weights)
            w *= wmod.beta(ell, scn.weights)
            for a in (u, v):
                for k in snap.cand[a]:
                    w *= wmod.clearance_factor(dist[a, k], scn.weights)
                for idx in range(scn.obstacles.shape[0]):
                    w *= wmod.clearance_factor(
                        float(np.linalg.norm(self.p[a] - scn.obstacles[idx])), scn.weights
                    )
            W[u, v] = W[v, u] = w
        return W

    # ------------------------------------------------------------- substeps

    def _exact_moments(self, phat_rows: np.ndarray) -> tuple[np.ndarray, float, np.ndarray]:
        """Idealized consensus: exact network averages of the three moments."""
        v = np.array([c.rig.v_hat for c in self.cells])
        v_bar = v.mean(axis=0)
        v2_mean = float((v * v).mean())
        cross = np.zeros(3)
        for i in range(self.scn.n):
            cross += local_inputs(phat_rows[i], v[i])["cross"]
        return v_bar, v2_mean, cross / self.scn.n

    def _substep(self, snap: WorldSnapshot, meas: Measurements) -> None:
        scn = self.scn
        gains = scn.gains
        delivered = [self.bus.deliver(i) for i in range(scn.n)]
        if scn.oracle_consensus:
            phat_rows = np.array([c.pos.p_hat for c in self.cells])
            v_bar_x, v2_mean_x, cross_x = self._exact_moments(phat_rows)

        new_cells: list[AgentCell] = []
        for i, cell in enumerate(self.cells):
            pkts = delivered[i]
            dists_row = {j: float(meas.dist[i, j]) for j in snap.neighbors[i]}
            pos2 = position_estimator_step(
                cell.pos, pkts, dists_row, gains, scn.dt_est,
                is_center=(i == scn.i_c),
                anchor_required=(i in meas.anchors),
                anchor_target=meas.anchors.get(i),
            )
            if scn.oracle_consensus:
                v_bar, v2_mean, cross = v_bar_x, v2_mean_x, cross_x
                rig_filters = (cell.rig.avg_v, cell.rig.avg_v2, cell.rig.cross)
            else:
                v_bar, v2_mean, cross = consensus_outputs(cell.rig)
                u = local_inputs(cell.pos.p_hat, cell.rig.v_hat)
                rig_filters = (
                    pi_consensus_step(
                        cell.rig.avg_v, u["avg_v"],
                        [pkts[j].avg_v_z for j in pkts], [pkts[j].avg_v_w for j in pkts],
                        gains, scn.dt_est,
                    ),
                    pi_consensus_step(
                        cell.rig.avg_v2, u["avg_v2"],
                        [pkts[j].avg_v2_z for j in pkts], [pkts[j].avg_v2_w for j in pkts],
                        gains, scn.dt_est,
                    ),
                    pi_consensus_step(
                        cell.rig.cross, u["cross"],
                        [pkts[j].cross_z for j in pkts], [pkts[j].cross_w for j in pkts],
                        gains, scn.dt_est,
                    ),
                )
            wrow = {j: float(meas.W[i, j]) for j in snap.neighbors[i]}
            vh2 = power_iteration_step(
                cell.rig.v_hat, cell.pos.p_hat, pkts, wrow,
                v_bar, v2_mean, cross, gains, scn.n, scn.dt_est,
            )
            new_cells.append(
                AgentCell(
                    index=i,
                    pos=pos2,
                    rig=RigidityEstimatorState(
                        v_hat=vh2, avg_v=rig_filters[0],
                        avg_v2=rig_filters[1], cross=rig_filters[2],
                    ),
                )
            )
        self.cells = new_cells
        self.bus.publish({i: make_packet(i, c.pos, c.rig) for i, c in enumerate(self.cells)})

    # -------------------------------------------------------------- control

    def _control_weight_grads(
        self,
        i: int,
        snap: WorldSnapshot,
        meas: Measurements,
        phat_rows: np.ndarray,
        have_packet: set[int],
    ) -> dict[int, np.ndarray]:
        """d W_ij / d p_i per neighbor j, from measured ranges and estimated
        directions; obstacle geometry is sensed (true).

        Gradients of clearance factors toward agents the agent cannot place
        (no packet) are dropped; their values still shape W_ij.
        """
        scn = self.scn
        params = scn.weights
        p = self.p
        grads: dict[int, np.ndarray] = {}

        def est_dir(a: int, b: int) -> np.ndarray:
            # unit vector from a to b in the common estimated frame
            d = phat_rows[b] - phat_rows[a]
            nrm = float(np.linalg.norm(d))
            return d / nrm if nrm > 1e-12 else np.zeros(3)

        for j in snap.neighbors[i]:
            ell = float(meas.dist[i, j])
            u_ij = -est_dir(i, j)  # direction of p_i - p_j
            values: list[float] = []
            dgrads: list[np.ndarray] = []

            ga = wmod.gamma_a(ell, params)
            values.append(ga)
            dgrads.append(wmod.gamma_a_slope(ell, params) * u_ij)
            if ga == 0.0:
                grads[j] = np.zeros(3)
                continue

            clr, arg = wmod._segment_clearance(p[i], p[j], scn.obstacles)
            gb = wmod.gamma_b(clr, params)
            values.append(gb)
            if arg >= 0:
                da, _db = wmod._segment_clearance_grads(p[i], p[j], scn.obstacles[arg])
                dgrads.append(wmod.gamma_b_slope(clr, params) * da)
            else:
                dgrads.append(np.zeros(3))

            values.append(wmod.beta(ell, params))
            dgrads.append(wmod.beta_slope(ell, params) * u_ij)

            # own clearance factors: distances measured by i, directions estimated
            for k in snap.cand[i]:
                d_ik = float(meas.dist[i, k])
                values.append(wmod.clearance_factor(d_ik, params))
                if k == j or k in have_packet:
                    dgrads.append(wmod.clearance_slope(d_ik, params) * -est_dir(i, k))
                else:
                    dgrads.append(np.zeros(3))
            # neighbor j's clearance factors: only the one toward i moves with p_i
            for k in snap.cand[j]:
                d_jk = float(meas.dist[j, k])
                values.append(wmod.clearance_factor(d_jk, params))
                if k == i:
                    dgrads.append(wmod.clearance_slope(d_jk, params) * u_ij)
                else:
                    dgrads.append(np.zeros(3))
            # obstacle clearances (true geometry, sensed)
            for a in (i, j):
                for idx in range(scn.obstacles.shape[0]):
                    dvec = p[a] - scn.obstacles[idx]
                    dnorm = float(np.linalg.norm(dvec))
                    values.append(wmod.clearance_factor(dnorm, params))
                    if a == i and dnorm > 1e-12:
                        dgrads.append(wmod.clearance_slope(dnorm, params) * dvec / dnorm)
                    else:
                        dgrads.append(np.zeros(3))

            total = np.zeros(3)
            for f in range(len(values)):
                if not dgrads[f].any():
                    continue
                rest = 1.0
                for g_idx, val in enumerate(values):
                    if g_idx != f:
                        rest *= val
                total += rest * dgrads[f]
            grads[j] = total
        return grads

    def _control(self, snap: WorldSnapshot, meas: Measurements) -> tuple[np.ndarray, list[int]]:
        scn = self.scn
        n = scn.n
        if self.t < scn.t_warm:
            return np.zeros((n, 3)), [0] * n

        if scn.oracle_eigenpair:
            # diagnostic mode: substitute the oracle eigenpair and exact relative
            # positions for every estimated quantity the controller consumes
            rel = self.p - self.p[scn.i_c]
            phat_rows = rel
            vrows = as_agent_rows(snap.report.eigvec7, n)
            lam_hats = [snap.report.lambda7] * n
            zeros3 = np.zeros(3)
            oracle_pkts = {
                j: NeighborPacket(
                    sender=j, p_hat=rel[j], v_hat=vrows[j],
                    avg_v_z=zeros3, avg_v_w=zeros3, avg_v2_z=zeros3,
                    avg_v2_w=zeros3, cross_z=zeros3, cross_w=zeros3,
                )
                for j in range(n)
            }
            packets_by_agent = {
                i: {j: oracle_pkts[j] for j in snap.neighbors[i]} for i in range(n)
            }
        else:
            phat_rows = np.array([c.pos.p_hat for c in self.cells])
            vrows = np.array([c.rig.v_hat for c in self.cells])
            lam_hats = [rigidity_eigenvalue_estimate(c.rig, scn.gains) for c in self.cells]
            packets_by_agent = {i: self.bus.deliver(i) for i in range(n)}

        xi = np.zeros((n, 3))
        clamped = [0] * n
        for i in range(n):
            pkts = packets_by_agent[i]
            wrow = {j: float(meas.W[i, j]) for j in snap.neighbors[i]}
            grads_row = self._control_weight_grads(
                i, snap, meas, phat_rows, have_packet=set(pkts)
            )
            if is_clamped(lam_hats[i], scn.potential):
                clamped[i] = 1
                self.clamp_events += 1
            cmd = control_velocity(
                lam_hats[i], phat_rows[i], vrows[i], pkts, wrow, grads_row,
                scn.potential,
            )
            cmd = apply_exogenous(cmd, scn.exogenous.get(i, ()), self.t, scn.exo_cap)
            xi[i] = saturate(cmd, scn.v_max)
        return xi, clamped

    # ------------------------------------------------------------------ tick

    def tick(self) -> None:
        scn = self.scn
        snap = self.snapshot
        meas = self._measure(snap)
        self.bus.set_topology({i: snap.neighbors[i] for i in range(scn.n)})
        self.bus.publish({i: make_packet(i, c.pos, c.rig) for i, c in enumerate(self.cells)})
        for _ in range(scn.n_sub):
            self._substep(snap, meas)
        xi, clamped = self._control(snap, meas)
        self.p = self.p + scn.dt_ctrl * xi
        self.tick_index += 1
        self.t = self.tick_index * scn.dt_ctrl
        self.snapshot = self._compute_snapshot()
        self._append_records(clamped=clamped)

    def run(self) -> "Simulation":
        for _ in range(self.scn.n_ticks):
            self.tick()
        return self

    # ------------------------------------------------------------- recording

    def _append_records(self, clamped: list[int]) -> None:
        scn = self.scn
        snap = self.snapshot
        n = scn.n
        lam7 = snap.report.lambda7
        lam8 = snap.report.lambda8
        lam_hats = [rigidity_eigenvalue_estimate(c.rig, scn.gains) for c in self.cells]
        e_lambda = float(np.mean([abs(lam7 - lh) for lh in lam_hats]))
        rel = self.p - self.p[scn.i_c]

        breach = 0
        for u in range(n):
            for v in range(u + 1, n):
                if snap.dist[u, v] < scn.weights.l_min - BREACH_TOL:
                    breach += 1
        for i in range(n):
            if point_obstacle_distance(self.p[i], scn.obstacles) < scn.weights.l_min - BREACH_TOL:
                breach += 1
        self.breach_events += breach

        stacked = float(np.linalg.norm(np.array([c.rig.v_hat for c in self.cells]).ravel()))
        if stacked > self.bound_limit:
            self.bound_violations += 1

        for i in range(n):
            cell = self.cells[i]
            pos_err = float(np.linalg.norm(rel[i] - cell.pos.p_hat))
            self.trace.append((
                self.t, i,
                self.p[i, 0], self.p[i, 1], self.p[i, 2],
                cell.pos.p_hat[0], cell.pos.p_hat[1], cell.pos.p_hat[2],
                cell.rig.v_hat[0], cell.rig.v_hat[1], cell.rig.v_hat[2],
                lam_hats[i], lam7, lam8, pos_err, e_lambda,
                snap.n_edges, clamped[i], breach,
            ))

    # -------------------------------------------------------------- summary

    def summary(self) -> dict:
        scn = self.scn
        lam7s = self.trace.series("lam7_true")[:, 0]
        times = self.trace.times()
        post = times > scn.t_warm
        out = {
            "schema_version": SCHEMA_VERSION,
            "n": scn.n,
            "ticks": self.tick_index,
            "duration": scn.duration,
            "dt_ctrl": scn.dt_ctrl,
            "lambda7_initial": float(lam7s[0]),
            "lambda7_final": float(lam7s[-1]),
            "lambda7_min_postwarm": float(lam7s[post].min()) if post.any() else None,
            "e_lambda_final": float(self.trace.series("e_lambda")[-1, 0]),
            "pos_err_final_max": float(self.trace.series("pos_err")[-1].max()),
            "n_edges_min": int(self.trace.column("n_edges").min()),
            "n_edges_max": int(self.trace.column("n_edges").max()),
            "breach_events": self.breach_events,
            "bound_violations": self.bound_violations,
            "clamp_events": self.clamp_events,
            "degenerate_special_ticks": self.degenerate_special_ticks,
        }
        if self.bus.audit:
            out["audit"] = {"reads": self.bus.reads, "violations": self.bus.violations}
        return out


def run_scenario(scenario: Scenario, audit: bool = False) -> Simulation:
    """Validate, build, and run a scenario to completion."""
    sim = Simulation(scenario, audit=audit)
    return sim.run()
