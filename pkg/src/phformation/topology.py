"""Interaction graphs, incidence matrices, and structural queries."""

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class FormationGraph:
    """Undirected interaction graph with oriented edges and angle triples.

    Edges are (tail, head) node-index pairs; the head sits on the positive
    side of the edge in the incidence matrix. Angle triples are
    (vertex, ray_a, ray_b): the angle opens at ``vertex`` between the rays
    toward ``ray_a`` and ``ray_b``. All indices are 0-based.
    """

    n_nodes: int
    edges: tuple = ()
    angle_triples: tuple = ()

    def __post_init__(self):
        if not isinstance(self.n_nodes, int) or self.n_nodes < 1:
            raise ValueError(f"n_nodes must be a positive integer, got {self.n_nodes!r}")
        object.__setattr__(self, "edges", tuple((int(t), int(h)) for t, h in self.edges))
        object.__setattr__(
            self, "angle_triples", tuple((int(v), int(a), int(b)) for v, a, b in self.angle_triples)
        )
        seen = set()
        for j, (tail, head) in enumerate(self.edges):
            if not (0 <= tail < self.n_nodes and 0 <= head < self.n_nodes):
                raise ValueError(f"edge {j}: node index out of range for {self.n_nodes} nodes")
            if tail == head:
                raise ValueError(f"edge {j}: self-loop at node {tail}")
            key = (min(tail, head), max(tail, head))
            if key in seen:
                raise ValueError(f"edge {j}: duplicate unordered pair {key}")
            seen.add(key)
        for l, triple in enumerate(self.angle_triples):
            if any(not (0 <= i < self.n_nodes) for i in triple):
                raise ValueError(f"angle triple {l}: node index out of range")
            if len(set(triple)) != 3:
                raise ValueError(f"angle triple {l}: indices must be distinct, got {triple}")

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @property
    def n_triples(self) -> int:
        return len(self.angle_triples)


def build_incidence(graph: FormationGraph) -> np.ndarray:
    """Dense node-by-edge incidence matrix with +1 at heads and -1 at tails."""
    b = np.zeros((graph.n_nodes, graph.n_edges))
    for j, (tail, head) in enumerate(graph.edges):
        b[tail, j] = -1.0
        b[head, j] = 1.0
    return b


def connected_components(graph: FormationGraph) -> int:
    """Number of connected components of the undirected graph."""
    parent = list(range(graph.n_nodes))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for tail, head in graph.edges:
        ri, rj = find(tail), find(head)
        if ri != rj:
            parent[ri] = rj
    return len({find(i) for i in range(graph.n_nodes)})


def is_connected(graph: FormationGraph) -> bool:
    """True iff the graph has a single connected component."""
    return connected_components(graph) == 1


def has_cycles(graph: FormationGraph) -> bool:
    """True iff the edge set contains a cycle.

    Equivalent to the columns of the incidence matrix being linearly
    dependent: a forest on N nodes with c components has exactly N - c edges.
    """
    return graph.n_edges > graph.n_nodes - connected_components(graph)
