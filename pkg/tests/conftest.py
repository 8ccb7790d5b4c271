import numpy as np
import pytest

from phformation import scenario_io


@pytest.fixture(scope="session")
def bundled():
    """All bundled scenarios, parsed once."""
    return {name: scenario_io.load_bundled(name) for name in scenario_io.bundled_scenario_names()}


@pytest.fixture()
def rng():
    return np.random.default_rng(20240817)


def random_graph(rng, n_nodes, n_edges):
    """Random simple graph with the requested edge count."""
    pairs = [(i, j) for i in range(n_nodes) for j in range(i + 1, n_nodes)]
    chosen = rng.choice(len(pairs), size=min(n_edges, len(pairs)), replace=False)
    return [pairs[k] for k in chosen]


def spread_positions(rng, n, scale=3.0, min_sep=0.3):
    """Random positions with no two agents closer than min_sep."""
    while True:
        q = rng.uniform(-scale, scale, size=(n, 2))
        d = np.linalg.norm(q[:, None, :] - q[None, :, :], axis=2)
        if (d + np.eye(n) * 10.0).min() > min_sep:
            return q
