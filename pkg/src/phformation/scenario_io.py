"""Scenario file parsing, serialization, and the bundled scenario library.

Scenario files are line-oriented structured text with ``[section]`` headers
and ``key = value`` lines; see README.md for the grammar. Node, edge, and
triple indices are 1-based in files and converted to 0-based internally.
"""

import warnings
from importlib import resources

import numpy as np

from .constraints import ConstraintSet
from .control import GainConfig
from .energy import CONTROLLER_KINDS, SwarmState
from .errors import MissingTargetShape, ParseError, ScenarioWarning, ValidationError
from .simulate import Scenario
from .topology import FormationGraph

_SECTIONS = ("meta", "graph", "initial", "targets", "gains", "sim")

# (section, key) -> number of value tokens after the index token; None = special
_INDEXED_KEYS = {
    ("initial", "position"): 2,
    ("initial", "momentum"): 2,
    ("initial", "mass"): 1,
    ("targets", "displacement"): 2,
    ("targets", "distance"): 1,
    ("targets", "bearing"): 2,
    ("targets", "angle"): 1,
    ("targets", "position"): 2,
    ("gains", "d_r"): (2, 4),
    ("gains", "d_t"): (2, 4),
    ("gains", "d_f"): (2, 4),
    ("gains", "d_d"): (1,),
    ("gains", "d_b"): (2,),
    ("gains", "d_a"): (1,),
}

_SCALAR_KEYS = {
    ("meta", "name"),
    ("meta", "description"),
    ("graph", "nodes"),
    ("gains", "v_star"),
    ("sim", "controller"),
    ("sim", "step"),
    ("sim", "horizon"),
    ("sim", "sample_stride"),
    ("sim", "convergence_tol"),
    ("sim", "dissipation_slack"),
}


def _parse_float(token, line, field):
    try:
        return float(token)
    except ValueError:
        raise ParseError(line, field, f"not a number: {token!r}") from None


def _parse_index(token, line, field):
    if token == "*":
        return None
    try:
        value = int(token)
    except ValueError:
        raise ParseError(line, field, f"not an index: {token!r}") from None
    if value < 1:
        raise ParseError(line, field, "indices are 1-based")
    return value - 1


class _Assignments:
    """Indexed key = value lines for one entity family, wildcard-aware."""

    def __init__(self, field):
        self.field = field
        self.entries = []  # (line, index-or-None, values)

    def add(self, line, index, values):
        self.entries.append((line, index, values))

    def resolve(self, count, default=None):
        """Per-index value list; wildcard rows fill every slot."""
        out = [None] * count
        wildcard = [e for e in self.entries if e[1] is None]
        if len(wildcard) > 1 or (wildcard and len(self.entries) > 1):
            raise ValidationError(self.field, "wildcard row cannot be combined with other rows")
        if wildcard:
            return [wildcard[0][2]] * count
        for line, index, values in self.entries:
            if index >= count:
                raise ValidationError(self.field, f"index {index + 1} out of range (max {count})")
            if out[index] is not None:
                raise ValidationError(self.field, f"index {index + 1} assigned twice")
            out[index] = values
        if default is not None:
            out = [default if v is None else v for v in out]
        missing = [i + 1 for i, v in enumerate(out) if v is None]
        if missing:
            raise ValidationError(self.field, f"missing entries for indices {missing}")
        return out


def parse_scenario_text(text: str, source: str = "<string>") -> Scenario:
    """Parse scenario text into a validated Scenario."""
    section = None
    scalars = {}
    indexed = {}
    edges = []
    triples = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip()
            if section not in _SECTIONS:
                raise ParseError(lineno, section, "unknown section")
            continue
        if section is None:
            raise ParseError(lineno, line, "content before the first section header")
        if "=" not in line:
            raise ParseError(lineno, line, "expected 'key = value'")
        key, _, rest = line.partition("=")
        key = key.strip()
        rest = rest.strip()
        if section == "graph" and key == "edge":
            tokens = rest.split()
            if len(tokens) != 2:
                raise ParseError(lineno, "edge", "expected 'edge = tail head'")
            edges.append(
                (lineno, _parse_index(tokens[0], lineno, "edge"), _parse_index(tokens[1], lineno, "edge"))
            )
            continue
        if section == "graph" and key == "triple":
            tokens = rest.split()
            if len(tokens) != 3:
                raise ParseError(lineno, "triple", "expected 'triple = vertex ray_a ray_b'")
            triples.append((lineno, tuple(_parse_index(t, lineno, "triple") for t in tokens)))
            continue
        if (section, key) in _SCALAR_KEYS:
            if (section, key) in scalars:
                raise ParseError(lineno, key, "duplicate key")
            scalars[(section, key)] = (lineno, rest)
            continue
        if (section, key) in _INDEXED_KEYS:
            width = _INDEXED_KEYS[(section, key)]
            widths = width if isinstance(width, tuple) else (width,)
            tokens = rest.split()
            if not tokens:
                raise ParseError(lineno, key, "missing index")
            idx = _parse_index(tokens[0], lineno, key)
            if len(tokens) - 1 not in widths:
                raise ParseError(lineno, key, f"expected {' or '.join(map(str, widths))} values")
            values = [_parse_float(t, lineno, key) for t in tokens[1:]]
            indexed.setdefault((section, key), _Assignments(key)).add(lineno, idx, values)
            continue
        raise ParseError(lineno, key, f"unknown key in [{section}]")
    return _assemble(scalars, indexed, edges, triples, source)


def _scalar(scalars, section, key, default=None, required=False):
    entry = scalars.get((section, key))
    if entry is None:
        if required:
            raise ValidationError(key, f"missing required [{section}] {key}")
        return default
    return entry


def _scalar_float(scalars, section, key, default):
    entry = scalars.get((section, key))
    if entry is None:
        return default
    return _parse_float(entry[1], entry[0], key)


def _gain_blocks(values_list, field):
    blocks = np.zeros((len(values_list), 2, 2))
    for i, values in enumerate(values_list):
        if len(values) == 1:
            blocks[i] = values[0] * np.eye(2)
        elif len(values) == 2:
            blocks[i] = np.diag(values)
        else:
            blocks[i] = np.array(values).reshape(2, 2)
    return blocks


def _assemble(scalars, indexed, edges, triples, source):
    nodes_entry = _scalar(scalars, "graph", "nodes", required=True)
    try:
        n_nodes = int(nodes_entry[1])
    except ValueError:
        raise ParseError(nodes_entry[0], "nodes", f"not an integer: {nodes_entry[1]!r}") from None
    for lineno, tail, head in edges:
        if tail is None or head is None:
            raise ParseError(lineno, "edge", "wildcard not allowed here")
    try:
        graph = FormationGraph(
            n_nodes,
            edges=tuple((tail, head) for _, tail, head in edges),
            angle_triples=tuple(tr for _, tr in triples),
        )
    except ValueError as exc:
        raise ValidationError("graph", str(exc)) from None

    def resolved(section, key, count, default=None):
        assignments = indexed.get((section, key))
        if assignments is None:
            if default is None:
                raise ValidationError(key, f"missing [{section}] {key}")
            return [default] * count
        return assignments.resolve(count, default=default)

    positions = np.array(resolved("initial", "position", n_nodes))
    momenta = np.array(resolved("initial", "momentum", n_nodes, default=[0.0, 0.0]))
    masses = np.array([m[0] for m in resolved("initial", "mass", n_nodes, default=[1.0])])
    if np.any(masses <= 0.0):
        raise ValidationError("mass", "masses must be positive")
    initial_state = SwarmState(q=positions, p=momenta, masses=masses)

    # Targets keep file order for deterministic constraint numbering.
    def bindings(key):
        assignments = indexed.get(("targets", key))
        if assignments is None:
            return [], []
        ids, values = [], []
        for line, index, vals in assignments.entries:
            if index is None:
                raise ParseError(line, key, "wildcard not allowed for targets")
            if index in ids:
                raise ValidationError(key, f"edge or triple {index + 1} bound twice")
            ids.append(index)
            values.append(vals)
        return ids, values

    disp_ids, disp_vals = bindings("displacement")
    dist_ids, dist_vals = bindings("distance")
    bear_ids, bear_vals = bindings("bearing")
    ang_ids, ang_vals = bindings("angle")
    dist_star = np.array([v[0] for v in dist_vals])
    if np.any(dist_star <= 0.0):
        raise ValidationError("distance", "desired distances must be positive")
    s_star = np.array(bear_vals).reshape(len(bear_ids), 2)
    if len(bear_ids):
        norms = np.linalg.norm(s_star, axis=1)
        if np.any(norms == 0.0):
            raise ValidationError("bearing", "bearing target cannot be the zero vector")
        if np.any(np.abs(norms - 1.0) > 1e-9):
            warnings.warn(
                f"{source}: bearing targets renormalized to unit length", ScenarioWarning
            )
        s_star = s_star / norms[:, None]
    cos_star = np.array([v[0] for v in ang_vals])
    if np.any(np.abs(cos_star) > 1.0):
        raise ValidationError("angle", "cosine targets must lie in [-1, 1]")
    try:
        constraint_set = ConstraintSet(
            disp_edges=disp_ids,
            z_star=np.array(disp_vals).reshape(len(disp_ids), 2),
            dist_edges=dist_ids,
            dist_star_sq=dist_star**2,
            bearing_edges=bear_ids,
            s_star=s_star,
            angle_indices=ang_ids,
            cos_star=cos_star,
        )
        constraint_set.validate_against(graph)
    except ValueError as exc:
        raise ValidationError("targets", str(exc)) from None

    v_entry = scalars.get(("gains", "v_star"))
    if v_entry is None:
        v_star = np.zeros(2)
    else:
        tokens = v_entry[1].split()
        if len(tokens) != 2:
            raise ParseError(v_entry[0], "v_star", "expected two components")
        v_star = np.array([_parse_float(t, v_entry[0], "v_star") for t in tokens])

    def family_gains(key, ids, kind_field):
        assignments = indexed.get(("gains", key))
        if assignments is None:
            return [[0.0, 0.0]] * len(ids)
        out = [None] * len(ids)
        wildcard = [e for e in assignments.entries if e[1] is None]
        if wildcard:
            if len(assignments.entries) > 1:
                raise ValidationError(key, "wildcard row cannot be combined with other rows")
            return [wildcard[0][2]] * len(ids)
        by_id = {index: (line, vals) for line, index, vals in assignments.entries}
        if len(by_id) != len(assignments.entries):
            raise ValidationError(key, "index assigned twice")
        for pos, edge_id in enumerate(ids):
            if edge_id not in by_id:
                raise ValidationError(key, f"no gain for {kind_field} {edge_id + 1}")
            out[pos] = by_id.pop(edge_id)[1]
        if by_id:
            stray = sorted(i + 1 for i in by_id)
            raise ValidationError(key, f"gain bound to unconstrained index {stray}")
        return out

    try:
        gains = GainConfig(
            v_star=v_star,
            d_r=_gain_blocks(resolved("gains", "d_r", n_nodes, default=[0.0, 0.0]), "d_r"),
            d_t=_gain_blocks(resolved("gains", "d_t", n_nodes, default=[0.0, 0.0]), "d_t"),
            d_f=_gain_blocks(family_gains("d_f", disp_ids, "displacement edge"), "d_f"),
            d_d=np.array([v[0] for v in family_gains("d_d", dist_ids, "distance edge")]),
            d_b=_gain_blocks(family_gains("d_b", bear_ids, "bearing edge"), "d_b"),
            d_a=np.array([v[0] for v in family_gains("d_a", ang_ids, "angle triple")]),
        )
    except ValueError as exc:
        raise ValidationError("gains", str(exc)) from None

    controller_entry = _scalar(scalars, "sim", "controller", required=True)
    controller = controller_entry[1]
    if controller not in CONTROLLER_KINDS:
        raise ValidationError("controller", f"unknown controller {controller!r}")

    target_positions = None
    if ("targets", "position") in indexed:
        target_positions = np.array(
            indexed[("targets", "position")].resolve(n_nodes)
        )

    stride_entry = scalars.get(("sim", "sample_stride"))
    if stride_entry is None:
        sample_stride = 10
    else:
        try:
            sample_stride = int(stride_entry[1])
        except ValueError:
            raise ParseError(stride_entry[0], "sample_stride", "not an integer") from None

    name_entry = scalars.get(("meta", "name"))
    desc_entry = scalars.get(("meta", "description"))
    try:
        return Scenario(
            graph=graph,
            initial_state=initial_state,
            constraints=constraint_set,
            gains=gains,
            controller_kind=controller,
            horizon=_scalar_float(scalars, "sim", "horizon", 30.0),
            step=_scalar_float(scalars, "sim", "step", 1e-3),
            sample_stride=sample_stride,
            convergence_tol=_scalar_float(scalars, "sim", "convergence_tol", 1e-3),
            dissipation_slack=_scalar_float(scalars, "sim", "dissipation_slack", 1e-8),
            name=name_entry[1] if name_entry else "",
            description=desc_entry[1] if desc_entry else "",
            target_positions=target_positions,
        )
    except ValueError as exc:
        raise ValidationError("scenario", str(exc)) from None


def parse_scenario(path) -> Scenario:
    """Load and validate a scenario file."""
    try:
        with open(path, "r", encoding="utf-8") as handle:
            text = handle.read()
    except OSError as exc:
        raise ParseError(0, str(path), f"cannot read file: {exc}") from None
    return parse_scenario_text(text, source=str(path))


def serialize_scenario(scenario: Scenario) -> str:
    """Canonical text form of a scenario; parse(serialize(s)) equals s."""
    graph = scenario.graph
    con = scenario.constraints
    gains = scenario.gains
    state = scenario.initial_state
    lines = []

    def fmt(x):
        return repr(float(x))

    def block_tokens(block):
        if np.array_equal(block, np.diag(np.diagonal(block))):
            return f"{fmt(block[0, 0])} {fmt(block[1, 1])}"
        return " ".join(fmt(v) for v in np.asarray(block).reshape(-1))

    lines.append("[meta]")
    lines.append(f"name = {scenario.name}")
    if scenario.description:
        lines.append(f"description = {scenario.description}")
    lines.append("")
    lines.append("[graph]")
    lines.append(f"nodes = {graph.n_nodes}")
    for tail, head in graph.edges:
        lines.append(f"edge = {tail + 1} {head + 1}")
    for v, a, b in graph.angle_triples:
        lines.append(f"triple = {v + 1} {a + 1} {b + 1}")
    lines.append("")
    lines.append("[initial]")
    for i in range(graph.n_nodes):
        lines.append(f"position = {i + 1}  {fmt(state.q[i, 0])} {fmt(state.q[i, 1])}")
    for i in range(graph.n_nodes):
        lines.append(f"momentum = {i + 1}  {fmt(state.p[i, 0])} {fmt(state.p[i, 1])}")
    for i in range(graph.n_nodes):
        lines.append(f"mass = {i + 1}  {fmt(state.masses[i])}")
    lines.append("")
    lines.append("[targets]")
    for pos, j in enumerate(con.disp_edges):
        lines.append(f"displacement = {j + 1}  {fmt(con.z_star[pos, 0])} {fmt(con.z_star[pos, 1])}")
    for pos, j in enumerate(con.dist_edges):
        lines.append(f"distance = {j + 1}  {fmt(np.sqrt(con.dist_star_sq[pos]))}")
    for pos, j in enumerate(con.bearing_edges):
        lines.append(f"bearing = {j + 1}  {fmt(con.s_star[pos, 0])} {fmt(con.s_star[pos, 1])}")
    for pos, l in enumerate(con.angle_indices):
        lines.append(f"angle = {l + 1}  {fmt(con.cos_star[pos])}")
    if scenario.target_positions is not None:
        for i in range(graph.n_nodes):
            tp = scenario.target_positions[i]
            lines.append(f"position = {i + 1}  {fmt(tp[0])} {fmt(tp[1])}")
    lines.append("")
    lines.append("[gains]")
    lines.append(f"v_star = {fmt(gains.v_star[0])} {fmt(gains.v_star[1])}")
    for i in range(graph.n_nodes):
        lines.append(f"d_r = {i + 1}  {block_tokens(gains.d_r[i])}")
    for i in range(graph.n_nodes):
        lines.append(f"d_t = {i + 1}  {block_tokens(gains.d_t[i])}")
    for pos, j in enumerate(con.disp_edges):
        lines.append(f"d_f = {j + 1}  {block_tokens(gains.d_f[pos])}")
    for pos, j in enumerate(con.dist_edges):
        lines.append(f"d_d = {j + 1}  {fmt(gains.d_d[pos])}")
    for pos, j in enumerate(con.bearing_edges):
        lines.append(f"d_b = {j + 1}  {block_tokens(gains.d_b[pos])}")
    for pos, l in enumerate(con.angle_indices):
        lines.append(f"d_a = {l + 1}  {fmt(gains.d_a[pos])}")
    lines.append("")
    lines.append("[sim]")
    lines.append(f"controller = {scenario.controller_kind}")
    lines.append(f"step = {fmt(scenario.step)}")
    lines.append(f"horizon = {fmt(scenario.horizon)}")
    lines.append(f"sample_stride = {scenario.sample_stride}")
    lines.append(f"convergence_tol = {fmt(scenario.convergence_tol)}")
    lines.append(f"dissipation_slack = {fmt(scenario.dissipation_slack)}")
    return "\n".join(lines) + "\n"


def bundled_scenario_names() -> list:
    """Names of the scenario files shipped with the package."""
    root = resources.files("phformation.scenarios")
    return sorted(p.name[: -len(".scn")] for p in root.iterdir() if p.name.endswith(".scn"))


def load_bundled(name: str) -> Scenario:
    """Parse one bundled scenario by name."""
    root = resources.files("phformation.scenarios")
    candidate = root / f"{name}.scn"
    if not candidate.is_file():
        raise ValidationError("scenario", f"no bundled scenario named {name!r}")
    return parse_scenario_text(candidate.read_text(encoding="utf-8"), source=name)


def reconstruct_target_positions(graph: FormationGraph, constraints: ConstraintSet) -> np.ndarray:
    """Integrate displacement targets over a spanning tree to get a target shape.

    Requires a displacement target on every edge of a connected graph; cycle
    sums must close to zero for the targets to be realizable.
    """
    if set(constraints.disp_edges) != set(range(graph.n_edges)) or graph.n_edges == 0:
        raise MissingTargetShape(
            "target reconstruction needs a displacement target on every edge"
        )
    z_by_edge = {j: constraints.z_star[pos] for pos, j in enumerate(constraints.disp_edges)}
    positions = np.full((graph.n_nodes, 2), np.nan)
    positions[0] = 0.0
    adjacency = {i: [] for i in range(graph.n_nodes)}
    for j, (tail, head) in enumerate(graph.edges):
        adjacency[tail].append((head, j, 1.0))
        adjacency[head].append((tail, j, -1.0))
    stack = [0]
    while stack:
        node = stack.pop()
        for other, j, sign in adjacency[node]:
            if np.isnan(positions[other, 0]):
                positions[other] = positions[node] + sign * z_by_edge[j]
                stack.append(other)
    if np.isnan(positions).any():
        raise MissingTargetShape("graph is disconnected; target shape is not determined")
    for j, (tail, head) in enumerate(graph.edges):
        if np.linalg.norm(positions[head] - positions[tail] - z_by_edge[j]) > 1e-9:
            raise MissingTargetShape("displacement targets are inconsistent around a cycle")
    return positions


def target_configuration(scenario: Scenario) -> np.ndarray:
    """Target positions from the file, or reconstructed from displacements."""
    if scenario.target_positions is not None:
        return scenario.target_positions
    return reconstruct_target_positions(scenario.graph, scenario.constraints)
