"""Port-Hamiltonian formation control and velocity tracking simulator.

A group of point-mass agents exchanges information over an undirected graph.
An internal feedback tracks a common desired velocity; an external feedback
stabilizes a formation shape specified by relative positions, distances,
bearings, angle cosines, or a mix of those, each implemented as a virtual
spring-damper on its constraint error. The package provides the rigidity
analysis behind the local-stability conditions, a fixed-step RK4 simulator
with energy-dissipation monitoring, and a CLI for the bundled scenarios.
"""

from .constraints import ConstraintSet
from .control import (
    GainConfig,
    u_angle,
    u_bearing,
    u_displacement,
    u_distance,
    u_heterogeneous,
    u_velocity,
    uniform_gains,
)
from .energy import (
    ConstraintErrors,
    SwarmState,
    TrackingError,
    constraint_errors,
    formation_gradient,
    hamiltonian_formation,
    hamiltonian_tracking,
    in_equilibrium_set,
    total_hamiltonian,
    tracking_error,
)
from .errors import (
    DegenerateEdge,
    FormationError,
    InsufficientAgents,
    MissingTargetShape,
    NonFiniteState,
    ParseError,
    ScenarioWarning,
    ValidationError,
)
from .rigidity import (
    BearingVectors,
    EdgeVectors,
    RigidityReport,
    angle_jacobian,
    angle_rigidity,
    bearing_rigidity,
    bearings,
    check_infinitesimal_rigidity,
    complete_rigidity_matrix,
    distance_rigidity,
    edge_vectors,
    numerical_rank,
)
from .scenario_io import (
    bundled_scenario_names,
    load_bundled,
    parse_scenario,
    parse_scenario_text,
    reconstruct_target_positions,
    serialize_scenario,
    target_configuration,
)
from .simulate import (
    ConvergenceReport,
    DissipationReport,
    Scenario,
    Trajectory,
    closed_loop_derivative,
    convergence_metrics,
    dissipation_monitor,
    integrate,
)
from .topology import FormationGraph, build_incidence, connected_components, has_cycles, is_connected

__version__ = "0.1.0"
