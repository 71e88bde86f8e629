"""swarmrigid: rigidity maintenance for multi-robot formations.

Library layers, bottom to top: graphs (graphs/geometry), rigidity (framework
algebra and spectra), weights (the smooth inter-agent weight model), estimators
(distributed relative-position / rigidity-eigenvalue estimation), controller
(gradient rigidity maintenance), engine (closed-loop simulator), cli.
"""

from .controller import (
    EstimatorNotReady,
    ExogenousSegment,
    PotentialParams,
    apply_exogenous,
    control_velocity,
    potential,
    potential_slope,
    saturate,
)
from .engine import (
    AgentCell,
    MessageBus,
    Scenario,
    ScenarioRejected,
    Simulation,
    Trace,
    run_scenario,
)
from .estimators import (
    Gains,
    MissingNeighborPacket,
    NeighborPacket,
    PiFilterState,
    PositionEstimatorState,
    RigidityEstimatorState,
    StaleSpecialMeasurement,
    pi_consensus_step,
    position_estimator_step,
    power_iteration_step,
    rigidity_eigenvalue_estimate,
)
from .graphs import (
    Graph,
    GraphError,
    TooFewVertices,
    complete_graph,
    incidence_matrix,
    local_incidence_matrix,
    pairwise_distance,
    segment_obstacle_distance,
)
from .rigidity import (
    CollinearConfiguration,
    RigidityReport,
    WeightedFramework,
    edge_quadratic,
    lambda7_gradient,
    null_space_basis,
    permuted_laplacian_form,
    quadratic_form_by_edges,
    rigidity_matrix,
    rigidity_report,
    symmetric_rigidity_matrix,
    trivial_motion_basis,
    unweighted_counterpart,
    weighted_rigidity_matrix,
)
from .weights import WeightParams, alpha, beta, candidate_set, gamma_a, gamma_b, weight, weight_gradient

__version__ = "0.1.0"
