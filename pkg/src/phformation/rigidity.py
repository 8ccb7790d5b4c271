"""Edge-space geometry and the distance, bearing, and angle rigidity matrices.

All rigidity matrices act on stacked positions q = (q_1, ..., q_N) flattened
agent-major, so a matrix with 2N columns multiplies ``q.reshape(-1)``.
Conventions:

    z_j   = q_head - q_tail                  relative position of edge j
    s_j   = z_j / |z_j|                      unit bearing of edge j
    P_s   = I - s s^T                        projector onto the complement of s
    R_dist    rows     z_j^T (B^T x I_2)     one row per edge
    R_bearing blocks   (P_s / |z_j|) (B^T x I_2)   two rows per edge
    R_angle   rows     d(cos angle_l)/dq     one row per triple
"""

from dataclasses import dataclass

import numpy as np

from .constraints import ConstraintSet
from .errors import DegenerateEdge, InsufficientAgents
from .topology import FormationGraph

# Edge lengths at or below this are treated as degenerate for bearings/angles.
DEGENERACY_EPS = 1e-9

# Singular values below max(shape) * sigma_max * RANK_TOL_FACTOR count as zero.
RANK_TOL_FACTOR = 1e-12


@dataclass(frozen=True)
class EdgeVectors:
    """Relative positions z_j and their Euclidean norms, one entry per edge."""

    z: np.ndarray
    norms: np.ndarray


@dataclass(frozen=True)
class BearingVectors:
    """Unit bearings s_j and their orthogonal projectors P_s = I - s s^T."""

    s: np.ndarray
    projections: np.ndarray


@dataclass(frozen=True)
class RigidityReport:
    kind: str
    rank: int
    required_rank: int
    is_rigid: bool
    shape: tuple = None


def edge_vectors(q: np.ndarray, graph: FormationGraph) -> EdgeVectors:
    """Relative positions q_head - q_tail for every edge of the graph."""
    q = np.asarray(q, dtype=float).reshape(graph.n_nodes, -1)
    if graph.n_edges == 0:
        d = q.shape[1]
        return EdgeVectors(z=np.zeros((0, d)), norms=np.zeros(0))
    tails = np.array([t for t, _ in graph.edges])
    heads = np.array([h for _, h in graph.edges])
    z = q[heads] - q[tails]
    return EdgeVectors(z=z, norms=np.linalg.norm(z, axis=1))


def bearings(ev: EdgeVectors, eps: float = DEGENERACY_EPS) -> BearingVectors:
    """Unit bearings and projectors; raises DegenerateEdge on a short edge."""
    bad = np.flatnonzero(ev.norms <= eps)
    if bad.size:
        raise DegenerateEdge(int(bad[0]))
    s = ev.z / ev.norms[:, None]
    d = s.shape[1]
    proj = np.eye(d)[None, :, :] - s[:, :, None] * s[:, None, :]
    return BearingVectors(s=s, projections=proj)


def _select_edges(graph, edges):
    if edges is None:
        edges = range(graph.n_edges)
    return [(j, graph.edges[j]) for j in edges]


def distance_rigidity(q: np.ndarray, graph: FormationGraph, edges=None) -> np.ndarray:
    """Distance rigidity matrix: row j carries z_j^T at the head and -z_j^T at the tail.

    ``edges`` optionally restricts the rows to a subset of edge indices.
    Zero-length edges are allowed and produce zero rows.
    """
    q = np.asarray(q, dtype=float).reshape(graph.n_nodes, -1)
    n, d = q.shape
    selected = _select_edges(graph, edges)
    r = np.zeros((len(selected), n * d))
    for row, (_, (tail, head)) in enumerate(selected):
        zj = q[head] - q[tail]
        r[row, d * head : d * head + d] = zj
        r[row, d * tail : d * tail + d] = -zj
    return r


def bearing_rigidity(
    q: np.ndarray, graph: FormationGraph, edges=None, eps: float = DEGENERACY_EPS
) -> np.ndarray:
    """Bearing rigidity matrix: block row j carries P_{s_j}/|z_j| with incidence signs."""
    q = np.asarray(q, dtype=float).reshape(graph.n_nodes, -1)
    n, d = q.shape
    selected = _select_edges(graph, edges)
    r = np.zeros((d * len(selected), n * d))
    for row, (j, (tail, head)) in enumerate(selected):
        zj = q[head] - q[tail]
        nrm = np.linalg.norm(zj)
        if nrm <= eps:
            raise DegenerateEdge(j)
        s = zj / nrm
        block = (np.eye(d) - np.outer(s, s)) / nrm
        r[d * row : d * row + d, d * head : d * head + d] = block
        r[d * row : d * row + d, d * tail : d * tail + d] = -block
    return r


def angle_jacobian(q: np.ndarray, triple, eps: float = DEGENERACY_EPS):
    """Row-vector coefficients (L1, L2, L3) of d(cos angle)/dt at a triple.

    With s_k the unit bearing from the vertex toward ray_a (edge vector z_k)
    and s_j toward ray_b (edge vector z_j):

        L1 = -(s_j^T P_{s_k}/|z_k| + s_k^T P_{s_j}/|z_j|)
        L2 =   s_j^T P_{s_k}/|z_k|
        L3 =   s_k^T P_{s_j}/|z_j|

    so that d(cos)/dt = L1 qdot_vertex + L2 qdot_a + L3 qdot_b.
    """
    q = np.asarray(q, dtype=float)
    vertex, ray_a, ray_b = triple
    zk = q[ray_a] - q[vertex]
    zj = q[ray_b] - q[vertex]
    nk = np.linalg.norm(zk)
    nj = np.linalg.norm(zj)
    if nk <= eps or nj <= eps:
        raise DegenerateEdge(tuple(triple), context="angle triple")
    sk = zk / nk
    sj = zj / nj
    cos_t = float(sk @ sj)
    l2 = (sj - cos_t * sk) / nk
    l3 = (sk - cos_t * sj) / nj
    l1 = -(l2 + l3)
    return l1, l2, l3


def angle_rigidity(q: np.ndarray, triples, eps: float = DEGENERACY_EPS) -> np.ndarray:
    """Angle rigidity matrix: row l scatters (L1, L2, L3) to the triple's agents."""
    q = np.asarray(q, dtype=float)
    n, d = q.shape
    if d != 2:
        raise ValueError("angle rigidity is defined in the plane only")
    triples = list(triples)
    r = np.zeros((len(triples), n * d))
    for row, triple in enumerate(triples):
        l1, l2, l3 = angle_jacobian(q, triple, eps=eps)
        vertex, ray_a, ray_b = triple
        r[row, d * vertex : d * vertex + d] = l1
        r[row, d * ray_a : d * ray_a + d] = l2
        r[row, d * ray_b : d * ray_b + d] = l3
    return r


def numerical_rank(matrix: np.ndarray, tol: float = None) -> int:
    """Rank by SVD with the max(shape) * sigma_max * 1e-12 zero threshold."""
    matrix = np.atleast_2d(np.asarray(matrix, dtype=float))
    if matrix.size == 0:
        return 0
    sigma = np.linalg.svd(matrix, compute_uv=False)
    if tol is None:
        tol = max(matrix.shape) * sigma[0] * RANK_TOL_FACTOR
    return int(np.count_nonzero(sigma > tol))


def complete_rigidity_matrix(
    q: np.ndarray, graph: FormationGraph, constraints: ConstraintSet, eps: float = DEGENERACY_EPS
) -> np.ndarray:
    """Stacked Jacobian of all bound constraints: displacement, distance, bearing, angle."""
    q = np.asarray(q, dtype=float).reshape(graph.n_nodes, -1)
    n, d = q.shape
    blocks = []
    if constraints.disp_edges:
        disp = np.zeros((d * len(constraints.disp_edges), n * d))
        for row, j in enumerate(constraints.disp_edges):
            tail, head = graph.edges[j]
            disp[d * row : d * row + d, d * head : d * head + d] = np.eye(d)
            disp[d * row : d * row + d, d * tail : d * tail + d] = -np.eye(d)
        blocks.append(disp)
    if constraints.dist_edges:
        blocks.append(distance_rigidity(q, graph, edges=constraints.dist_edges))
    if constraints.bearing_edges:
        blocks.append(bearing_rigidity(q, graph, edges=constraints.bearing_edges, eps=eps))
    if constraints.angle_indices:
        triples = [graph.angle_triples[l] for l in constraints.angle_indices]
        blocks.append(angle_rigidity(q, triples, eps=eps))
    if not blocks:
        return np.zeros((0, n * d))
    return np.vstack(blocks)


def check_infinitesimal_rigidity(
    kind: str,
    q: np.ndarray,
    graph: FormationGraph,
    constraints: ConstraintSet = None,
    rank_tol: float = None,
) -> RigidityReport:
    """Numerical-rank rigidity test at the configuration q.

    kind 'distance':  rigid iff rank = d N - d (d + 1) / 2 (requires N > d);
    kind 'bearing':   rigid iff rank = d N - d - 1 (kernel = translations
                      plus scaling);
    kind 'angle':     rigid iff rank = 2 N - 4 (kernel = translations,
                      rotation, scaling; planar only);
    kind 'complete':  the stacked constraint Jacobian reaches its structural
                      maximum rank 2 E_disp + E_dist + (d - 1) E_bearing + M,
                      i.e. the bound constraints are independent at q. Each
                      bearing block P_s/|z| contributes d - 1 rows of rank,
                      so this is the strongest rank the stack can attain.
    """
    q = np.asarray(q, dtype=float).reshape(graph.n_nodes, -1)
    n, d = q.shape
    if kind == "distance":
        if n <= d:
            raise InsufficientAgents(f"distance rigidity needs more than {d} agents, got {n}")
        matrix = distance_rigidity(q, graph)
        required = d * n - d * (d + 1) // 2
    elif kind == "bearing":
        matrix = bearing_rigidity(q, graph)
        required = d * n - d - 1
    elif kind == "angle":
        matrix = angle_rigidity(q, graph.angle_triples)
        required = 2 * n - 4
    elif kind == "complete":
        if constraints is None:
            raise ValueError("complete rigidity test needs a constraint set")
        matrix = complete_rigidity_matrix(q, graph, constraints)
        required = (
            d * len(constraints.disp_edges)
            + len(constraints.dist_edges)
            + (d - 1) * len(constraints.bearing_edges)
            + len(constraints.angle_indices)
        )
    else:
        raise ValueError(f"unknown rigidity kind {kind!r}")
    rank = numerical_rank(matrix, tol=rank_tol)
    return RigidityReport(
        kind=kind, rank=rank, required_rank=required, is_rigid=rank == required, shape=matrix.shape
    )
