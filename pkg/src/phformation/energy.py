"""Agent states, error coordinates, Hamiltonians, and their position gradients."""

from dataclasses import dataclass

import numpy as np

from . import rigidity
from .constraints import ConstraintSet
from .errors import DegenerateEdge
from .rigidity import DEGENERACY_EPS
from .topology import FormationGraph

CONTROLLER_KINDS = ("displacement", "distance", "bearing", "angle", "heterogeneous")


@dataclass(frozen=True)
class SwarmState:
    """Stacked positions and momenta of N point-mass agents.

    ``q`` and ``p`` have shape (N, d); ``masses`` has shape (N,). Each agent
    has the scalar mass matrix M_i = m_i I_d, so velocities are p_i / m_i.
    """

    q: np.ndarray
    p: np.ndarray
    masses: np.ndarray

    def __post_init__(self):
        # Copy before freezing so caller arrays stay writable.
        q = np.atleast_2d(np.array(self.q, dtype=float))
        p = np.atleast_2d(np.array(self.p, dtype=float))
        masses = np.array(self.masses, dtype=float).reshape(-1)
        if q.shape != p.shape:
            raise ValueError(f"position/momentum shape mismatch: {q.shape} vs {p.shape}")
        if masses.shape[0] != q.shape[0]:
            raise ValueError(f"expected {q.shape[0]} masses, got {masses.shape[0]}")
        if np.any(masses <= 0.0):
            raise ValueError("all masses must be positive")
        for arr in (q, p, masses):
            arr.flags.writeable = False
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "masses", masses)

    @property
    def n_agents(self) -> int:
        return self.q.shape[0]

    @property
    def dim(self) -> int:
        return self.q.shape[1]

    @property
    def velocities(self) -> np.ndarray:
        return self.p / self.masses[:, None]


@dataclass(frozen=True)
class TrackingError:
    """Momentum errors p_i - m_i v* and velocity errors qdot_i - v*."""

    p_bar: np.ndarray
    xi: np.ndarray


def tracking_error(state: SwarmState, v_star: np.ndarray) -> TrackingError:
    v_star = np.asarray(v_star, dtype=float)
    p_bar = state.p - state.masses[:, None] * v_star
    return TrackingError(p_bar=p_bar, xi=p_bar / state.masses[:, None])


@dataclass(frozen=True)
class ConstraintErrors:
    """Per-constraint errors, aligned with the owning ConstraintSet.

    e_z = z - z* per displacement edge, e_d = |z|^2 - |z*|^2 per distance
    edge, e_b = s - s* per bearing edge, e_a = cos - cos* per angle triple.
    Every entry is zero exactly when its constraint is met.
    """

    e_z: np.ndarray
    e_d: np.ndarray
    e_b: np.ndarray
    e_a: np.ndarray

    def max_abs(self) -> float:
        parts = [np.abs(e).max() for e in (self.e_z, self.e_d, self.e_b, self.e_a) if e.size]
        return max(parts) if parts else 0.0


def constraint_errors(
    q: np.ndarray,
    graph: FormationGraph,
    constraints: ConstraintSet,
    eps: float = DEGENERACY_EPS,
) -> ConstraintErrors:
    """Evaluate all bound constraint errors at the configuration q."""
    q = np.asarray(q, dtype=float).reshape(graph.n_nodes, -1)
    ev = rigidity.edge_vectors(q, graph)
    e_z = ev.z[list(constraints.disp_edges)] - constraints.z_star
    dist_ids = list(constraints.dist_edges)
    e_d = ev.norms[dist_ids] ** 2 - constraints.dist_star_sq
    bear_ids = list(constraints.bearing_edges)
    if bear_ids:
        norms = ev.norms[bear_ids]
        short = np.flatnonzero(norms <= eps)
        if short.size:
            raise DegenerateEdge(bear_ids[int(short[0])])
        e_b = ev.z[bear_ids] / norms[:, None] - constraints.s_star
    else:
        e_b = np.zeros((0, q.shape[1]))
    if constraints.angle_indices:
        cos_values = np.empty(len(constraints.angle_indices))
        for row, l in enumerate(constraints.angle_indices):
            vertex, ray_a, ray_b = graph.angle_triples[l]
            zk = q[ray_a] - q[vertex]
            zj = q[ray_b] - q[vertex]
            nk = np.linalg.norm(zk)
            nj = np.linalg.norm(zj)
            if nk <= eps or nj <= eps:
                raise DegenerateEdge(graph.angle_triples[l], context="angle triple")
            cos_values[row] = (zk @ zj) / (nk * nj)
        e_a = cos_values - constraints.cos_star
    else:
        e_a = np.zeros(0)
    return ConstraintErrors(e_z=e_z, e_d=e_d, e_b=e_b, e_a=e_a)


def hamiltonian_tracking(state: SwarmState, v_star: np.ndarray) -> float:
    """Velocity-tracking energy (1/2) sum_i p_bar_i^T M_i^{-1} p_bar_i."""
    p_bar = tracking_error(state, v_star).p_bar
    return 0.5 * float(np.sum(p_bar * p_bar / state.masses[:, None]))


def hamiltonian_formation(kind: str, errors: ConstraintErrors) -> float:
    """Formation potential for one constraint family, or their sum.

    displacement: (1/2) sum |e_z|^2,  distance: (1/4) sum e_d^2,
    bearing: (1/2) sum |e_b|^2,  angle: (1/2) sum e_a^2. The heterogeneous
    potential is the four-term sum, keeping the 1/4 on the distance block.
    """
    if kind == "displacement":
        return 0.5 * float(np.sum(errors.e_z * errors.e_z))
    if kind == "distance":
        return 0.25 * float(np.sum(errors.e_d * errors.e_d))
    if kind == "bearing":
        return 0.5 * float(np.sum(errors.e_b * errors.e_b))
    if kind == "angle":
        return 0.5 * float(np.sum(errors.e_a * errors.e_a))
    if kind == "heterogeneous":
        return (
            hamiltonian_formation("displacement", errors)
            + hamiltonian_formation("distance", errors)
            + hamiltonian_formation("bearing", errors)
            + hamiltonian_formation("angle", errors)
        )
    raise ValueError(f"unknown controller kind {kind!r}")


def total_hamiltonian(
    state: SwarmState, errors: ConstraintErrors, kind: str, v_star: np.ndarray
) -> float:
    """Closed-loop energy: tracking term plus the formation potential."""
    return hamiltonian_tracking(state, v_star) + hamiltonian_formation(kind, errors)


def formation_gradient(
    q: np.ndarray,
    graph: FormationGraph,
    constraints: ConstraintSet,
    kind: str,
    eps: float = DEGENERACY_EPS,
) -> np.ndarray:
    """Gradient of the formation potential w.r.t. positions, shape (N, d).

    displacement: (B x I) e_z,  distance: R_dist^T e_d,
    bearing: R_bear^T e_b,  angle: R_angle^T e_a; the heterogeneous gradient
    sums the per-family terms over their own sub-incidence patterns.
    """
    q = np.asarray(q, dtype=float).reshape(graph.n_nodes, -1)
    n, d = q.shape
    errors = constraint_errors(q, graph, constraints, eps=eps)
    grad = np.zeros(n * d)
    families = {
        "displacement": bool(constraints.disp_edges),
        "distance": bool(constraints.dist_edges),
        "bearing": bool(constraints.bearing_edges),
        "angle": bool(constraints.angle_indices),
    }
    active = families if kind == "heterogeneous" else {kind: families.get(kind, False)}
    if kind not in CONTROLLER_KINDS:
        raise ValueError(f"unknown controller kind {kind!r}")
    if active.get("displacement"):
        for row, j in enumerate(constraints.disp_edges):
            tail, head = graph.edges[j]
            grad[d * head : d * head + d] += errors.e_z[row]
            grad[d * tail : d * tail + d] -= errors.e_z[row]
    if active.get("distance"):
        r = rigidity.distance_rigidity(q, graph, edges=constraints.dist_edges)
        grad += r.T @ errors.e_d
    if active.get("bearing"):
        r = rigidity.bearing_rigidity(q, graph, edges=constraints.bearing_edges, eps=eps)
        grad += r.T @ errors.e_b.reshape(-1)
    if active.get("angle"):
        triples = [graph.angle_triples[l] for l in constraints.angle_indices]
        r = rigidity.angle_rigidity(q, triples, eps=eps)
        grad += r.T @ errors.e_a
    return grad.reshape(n, d)


def in_equilibrium_set(
    state: SwarmState,
    graph: FormationGraph,
    constraints: ConstraintSet,
    kind: str,
    v_star: np.ndarray,
    tol: float = 1e-6,
) -> bool:
    """Membership in the desired-equilibria set: zero velocity error and
    vanishing formation force.

    The force criterion is the undamped formation term (the potential
    gradient), so configurations like antipodal bearings that null the force
    while errors persist are reported as members; they are equilibria of the
    closed loop even though they are not target shapes.
    """
    xi = tracking_error(state, v_star).xi
    if np.abs(xi).max(initial=0.0) > tol:
        return False
    grad = formation_gradient(state.q, graph, constraints, kind)
    return np.abs(grad).max(initial=0.0) <= tol
