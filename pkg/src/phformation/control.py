"""Velocity-tracking feedback and the formation-stabilization force laws.

Every formation law has the shape u = -R^T (e + D edot) for its own
constraint Jacobian R, algebraic error e, and damping gain D, with the error
rate evaluated algebraically as edot = R M^{-1} p. Forces are returned
stacked per agent, shape (N, d).
"""

from dataclasses import dataclass, field

import numpy as np

from . import energy, rigidity
from .constraints import ConstraintSet
from .energy import SwarmState
from .rigidity import DEGENERACY_EPS
from .topology import FormationGraph


def _psd_blocks(blocks, count, name):
    arr = np.asarray(blocks, dtype=float)
    if arr.ndim == 2:
        arr = np.broadcast_to(arr, (count,) + arr.shape).copy()
    arr = arr.reshape(count, arr.shape[-1], arr.shape[-1])
    for i, block in enumerate(arr):
        if not np.allclose(block, block.T, atol=1e-12):
            raise ValueError(f"{name}[{i}] must be symmetric")
        if np.linalg.eigvalsh(block).min(initial=0.0) < -1e-12:
            raise ValueError(f"{name}[{i}] must be positive semi-definite")
    arr.flags.writeable = False
    return arr


def _nonneg_scalars(values, name):
    arr = np.array(values, dtype=float).reshape(-1)
    if np.any(arr < 0.0):
        raise ValueError(f"{name}: gains must be nonnegative")
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class GainConfig:
    """Dissipation gains and the common desired velocity.

    ``d_r``/``d_t`` hold one d x d PSD block per agent (plant friction and
    tracking damping). ``d_f`` holds one PSD block per displacement edge,
    ``d_d`` a nonnegative scalar per distance edge, ``d_b`` a PSD diagonal
    block per bearing edge, and ``d_a`` a nonnegative scalar per angle
    constraint. Per-constraint gains are aligned with the ConstraintSet
    binding order.
    """

    v_star: np.ndarray
    d_r: np.ndarray
    d_t: np.ndarray
    d_f: np.ndarray = field(default_factory=lambda: np.zeros((0, 2, 2)))
    d_d: np.ndarray = field(default_factory=lambda: np.zeros(0))
    d_b: np.ndarray = field(default_factory=lambda: np.zeros((0, 2, 2)))
    d_a: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        v_star = np.asarray(self.v_star, dtype=float).reshape(-1)
        v_star.flags.writeable = False
        object.__setattr__(self, "v_star", v_star)
        n = np.asarray(self.d_r).reshape(-1, 2, 2).shape[0]
        object.__setattr__(self, "d_r", _psd_blocks(self.d_r, n, "d_r"))
        object.__setattr__(self, "d_t", _psd_blocks(self.d_t, n, "d_t"))
        nf = np.asarray(self.d_f).reshape(-1, 2, 2).shape[0]
        object.__setattr__(self, "d_f", _psd_blocks(self.d_f, nf, "d_f"))
        object.__setattr__(self, "d_d", _nonneg_scalars(self.d_d, "d_d"))
        nb = np.asarray(self.d_b).reshape(-1, 2, 2).shape[0]
        d_b = _psd_blocks(self.d_b, nb, "d_b")
        off_diag = d_b - d_b * np.eye(2)
        if np.any(off_diag != 0.0):
            raise ValueError("d_b blocks must be diagonal")
        object.__setattr__(self, "d_b", d_b)
        object.__setattr__(self, "d_a", _nonneg_scalars(self.d_a, "d_a"))

    @property
    def n_agents(self) -> int:
        return self.d_r.shape[0]


def uniform_gains(
    n_agents: int,
    v_star,
    d_r: float = 0.0,
    d_t: float = 0.0,
    n_disp: int = 0,
    d_f: float = 0.0,
    n_dist: int = 0,
    d_d: float = 0.0,
    n_bearing: int = 0,
    d_b: float = 0.0,
    n_angle: int = 0,
    d_a: float = 0.0,
) -> GainConfig:
    """GainConfig with one scalar gain repeated across each family."""
    eye = np.eye(2)
    return GainConfig(
        v_star=np.asarray(v_star, dtype=float),
        d_r=np.repeat(d_r * eye[None], n_agents, axis=0),
        d_t=np.repeat(d_t * eye[None], n_agents, axis=0),
        d_f=np.repeat(d_f * eye[None], n_disp, axis=0),
        d_d=np.full(n_dist, d_d),
        d_b=np.repeat(d_b * eye[None], n_bearing, axis=0),
        d_a=np.full(n_angle, d_a),
    )


def u_velocity(state: SwarmState, gains: GainConfig) -> np.ndarray:
    """Internal tracking feedback u_i = -D^r_i v* - D^t_i M_i^{-1} p_bar_i."""
    xi = energy.tracking_error(state, gains.v_star).xi
    friction = np.einsum("nij,j->ni", gains.d_r, gains.v_star)
    damping = np.einsum("nij,nj->ni", gains.d_t, xi)
    return -friction - damping


def u_displacement(
    state: SwarmState, graph: FormationGraph, constraints: ConstraintSet, gains: GainConfig
) -> np.ndarray:
    """Spring force -(B x I) (z - z*) plus edge damping -(B x I) D^f (B^T x I) M^{-1} p."""
    spring = energy.formation_gradient(state.q, graph, constraints, "displacement")
    force = -spring
    v = state.velocities
    for row, j in enumerate(constraints.disp_edges):
        tail, head = graph.edges[j]
        tau = gains.d_f[row] @ (v[head] - v[tail])
        force[head] -= tau
        force[tail] += tau
    return force


def u_distance(
    state: SwarmState, graph: FormationGraph, constraints: ConstraintSet, gains: GainConfig
) -> np.ndarray:
    """Distance law u = -R^T (e_d + D^d edot_d) with edot_d = R M^{-1} p."""
    r = rigidity.distance_rigidity(state.q, graph, edges=constraints.dist_edges)
    e = energy.constraint_errors(state.q, graph, constraints).e_d
    edot = r @ state.velocities.reshape(-1)
    tau = e + gains.d_d * edot
    return -(r.T @ tau).reshape(state.q.shape)


def u_bearing(
    state: SwarmState,
    graph: FormationGraph,
    constraints: ConstraintSet,
    gains: GainConfig,
    eps: float = DEGENERACY_EPS,
) -> np.ndarray:
    """Bearing law u = -R^T (e_b + D^b edot_b) with edot_b = R M^{-1} p."""
    r = rigidity.bearing_rigidity(state.q, graph, edges=constraints.bearing_edges, eps=eps)
    e = energy.constraint_errors(state.q, graph, constraints, eps=eps).e_b
    edot = (r @ state.velocities.reshape(-1)).reshape(e.shape)
    tau = e + np.einsum("eij,ej->ei", gains.d_b, edot)
    return -(r.T @ tau.reshape(-1)).reshape(state.q.shape)


def u_angle(
    state: SwarmState,
    graph: FormationGraph,
    constraints: ConstraintSet,
    gains: GainConfig,
    eps: float = DEGENERACY_EPS,
) -> np.ndarray:
    """Angle law u = -R^T (e_a + D^a edot_a), accumulated over each agent's triples."""
    triples = [graph.angle_triples[l] for l in constraints.angle_indices]
    r = rigidity.angle_rigidity(state.q, triples, eps=eps)
    e = energy.constraint_errors(state.q, graph, constraints, eps=eps).e_a
    edot = r @ state.velocities.reshape(-1)
    tau = e + gains.d_a * edot
    return -(r.T @ tau).reshape(state.q.shape)


def u_heterogeneous(
    state: SwarmState,
    graph: FormationGraph,
    constraints: ConstraintSet,
    gains: GainConfig,
    eps: float = DEGENERACY_EPS,
) -> np.ndarray:
    """Sum of the four family laws, each over its own constrained sub-network."""
    force = np.zeros_like(state.q)
    if constraints.disp_edges:
        force += u_displacement(state, graph, constraints, gains)
    if constraints.dist_edges:
        force += u_distance(state, graph, constraints, gains)
    if constraints.bearing_edges:
        force += u_bearing(state, graph, constraints, gains, eps=eps)
    if constraints.angle_indices:
        force += u_angle(state, graph, constraints, gains, eps=eps)
    return force


_FORMATION_LAWS = {
    "displacement": u_displacement,
    "distance": u_distance,
    "bearing": u_bearing,
    "angle": u_angle,
    "heterogeneous": u_heterogeneous,
}


def u_formation(
    kind: str,
    state: SwarmState,
    graph: FormationGraph,
    constraints: ConstraintSet,
    gains: GainConfig,
) -> np.ndarray:
    """Dispatch to the formation law for the given controller kind."""
    try:
        law = _FORMATION_LAWS[kind]
    except KeyError:
        raise ValueError(f"unknown controller kind {kind!r}") from None
    return law(state, graph, constraints, gains)
