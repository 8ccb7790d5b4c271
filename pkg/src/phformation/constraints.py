"""Formation targets and the edges/triples they bind to."""

from dataclasses import dataclass, field

import numpy as np

from .topology import FormationGraph

_EMPTY_VEC = np.zeros((0, 2))
_EMPTY_SCALAR = np.zeros(0)


def _as_readonly(a, shape):
    out = np.asarray(a, dtype=float).reshape(shape)
    out.flags.writeable = False
    return out


@dataclass(frozen=True)
class ConstraintSet:
    """Desired values per constrained edge or angle triple.

    ``disp_edges``, ``dist_edges`` and ``bearing_edges`` index into the
    graph's edge list; ``angle_indices`` into its angle-triple list. Targets
    are aligned with those index tuples: ``z_star`` desired relative
    positions, ``dist_star_sq`` desired squared distances, ``s_star`` unit
    bearing targets, ``cos_star`` desired angle cosines. An edge may carry
    constraints of several kinds, but at most one of each kind.
    """

    disp_edges: tuple = ()
    z_star: np.ndarray = field(default_factory=lambda: _EMPTY_VEC)
    dist_edges: tuple = ()
    dist_star_sq: np.ndarray = field(default_factory=lambda: _EMPTY_SCALAR)
    bearing_edges: tuple = ()
    s_star: np.ndarray = field(default_factory=lambda: _EMPTY_VEC)
    angle_indices: tuple = ()
    cos_star: np.ndarray = field(default_factory=lambda: _EMPTY_SCALAR)

    def __post_init__(self):
        object.__setattr__(self, "disp_edges", tuple(int(j) for j in self.disp_edges))
        object.__setattr__(self, "dist_edges", tuple(int(j) for j in self.dist_edges))
        object.__setattr__(self, "bearing_edges", tuple(int(j) for j in self.bearing_edges))
        object.__setattr__(self, "angle_indices", tuple(int(l) for l in self.angle_indices))
        object.__setattr__(self, "z_star", _as_readonly(self.z_star, (len(self.disp_edges), 2)))
        object.__setattr__(
            self, "dist_star_sq", _as_readonly(self.dist_star_sq, (len(self.dist_edges),))
        )
        object.__setattr__(self, "s_star", _as_readonly(self.s_star, (len(self.bearing_edges), 2)))
        object.__setattr__(
            self, "cos_star", _as_readonly(self.cos_star, (len(self.angle_indices),))
        )
        for name in ("disp_edges", "dist_edges", "bearing_edges", "angle_indices"):
            ids = getattr(self, name)
            if len(set(ids)) != len(ids):
                raise ValueError(f"{name}: duplicate binding")
        if np.any(self.dist_star_sq <= 0.0):
            raise ValueError("distance targets must be positive")
        norms = np.linalg.norm(self.s_star, axis=1)
        if self.s_star.size and not np.allclose(norms, 1.0, atol=1e-12):
            raise ValueError("bearing targets must be unit vectors")
        if np.any(np.abs(self.cos_star) > 1.0):
            raise ValueError("angle cosine targets must lie in [-1, 1]")

    @property
    def n_constraints(self) -> int:
        return (
            len(self.disp_edges)
            + len(self.dist_edges)
            + len(self.bearing_edges)
            + len(self.angle_indices)
        )

    def validate_against(self, graph: FormationGraph) -> None:
        """Check that every binding refers to an existing edge or triple."""
        for name, ids, limit in (
            ("displacement", self.disp_edges, graph.n_edges),
            ("distance", self.dist_edges, graph.n_edges),
            ("bearing", self.bearing_edges, graph.n_edges),
            ("angle", self.angle_indices, graph.n_triples),
        ):
            for j in ids:
                if not (0 <= j < limit):
                    raise ValueError(f"{name} constraint bound to missing index {j}")
