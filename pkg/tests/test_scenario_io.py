import numpy as np
import pytest

from phformation.errors import MissingTargetShape, ParseError, ScenarioWarning, ValidationError
from phformation.scenario_io import (
    bundled_scenario_names,
    load_bundled,
    parse_scenario_text,
    reconstruct_target_positions,
    serialize_scenario,
    target_configuration,
)

S2 = np.sqrt(2.0)

MINIMAL = """
[graph]
nodes = 2
edge = 1 2

[initial]
position = 1  0.0 0.0
position = 2  1.0 0.0

[targets]
displacement = 1  1.0 1.0

[gains]
v_star = 1.0 1.0
d_t = *  1.0 1.0
d_f = *  1.0 1.0

[sim]
controller = displacement
"""


def scenarios_equal(a, b):
    checks = [
        a.graph == b.graph,
        np.array_equal(a.initial_state.q, b.initial_state.q),
        np.array_equal(a.initial_state.p, b.initial_state.p),
        np.array_equal(a.initial_state.masses, b.initial_state.masses),
        a.constraints.disp_edges == b.constraints.disp_edges,
        np.array_equal(a.constraints.z_star, b.constraints.z_star),
        a.constraints.dist_edges == b.constraints.dist_edges,
        np.array_equal(a.constraints.dist_star_sq, b.constraints.dist_star_sq),
        a.constraints.bearing_edges == b.constraints.bearing_edges,
        np.array_equal(a.constraints.s_star, b.constraints.s_star),
        a.constraints.angle_indices == b.constraints.angle_indices,
        np.array_equal(a.constraints.cos_star, b.constraints.cos_star),
        np.array_equal(a.gains.v_star, b.gains.v_star),
        np.array_equal(a.gains.d_r, b.gains.d_r),
        np.array_equal(a.gains.d_t, b.gains.d_t),
        np.array_equal(a.gains.d_f, b.gains.d_f),
        np.array_equal(a.gains.d_d, b.gains.d_d),
        np.array_equal(a.gains.d_b, b.gains.d_b),
        np.array_equal(a.gains.d_a, b.gains.d_a),
        a.controller_kind == b.controller_kind,
        a.horizon == b.horizon,
        a.step == b.step,
        a.sample_stride == b.sample_stride,
        a.convergence_tol == b.convergence_tol,
        a.dissipation_slack == b.dissipation_slack,
        a.name == b.name,
        (a.target_positions is None) == (b.target_positions is None),
    ]
    if a.target_positions is not None and b.target_positions is not None:
        checks.append(np.array_equal(a.target_positions, b.target_positions))
    return all(checks)


class TestParsing:
    def test_minimal_scenario(self):
        sc = parse_scenario_text(MINIMAL)
        assert sc.graph.n_nodes == 2
        assert sc.controller_kind == "displacement"
        assert sc.step == 1e-3
        assert sc.horizon == 30.0
        assert np.array_equal(sc.gains.v_star, [1.0, 1.0])
        assert np.array_equal(sc.constraints.z_star, [[1.0, 1.0]])

    def test_momenta_default_to_zero_and_masses_to_one(self):
        sc = parse_scenario_text(MINIMAL)
        assert np.array_equal(sc.initial_state.p, np.zeros((2, 2)))
        assert np.array_equal(sc.initial_state.masses, [1.0, 1.0])

    def test_unknown_section_rejected(self):
        with pytest.raises(ParseError) as excinfo:
            parse_scenario_text("[plumbing]\nfoo = 1\n")
        assert excinfo.value.line == 1

    def test_unknown_key_rejected_with_line(self):
        text = MINIMAL.replace("d_t = *  1.0 1.0", "dampening = *  1.0 1.0")
        with pytest.raises(ParseError) as excinfo:
            parse_scenario_text(text)
        assert "dampening" in str(excinfo.value)
        assert excinfo.value.line > 1

    def test_bad_number_rejected(self):
        with pytest.raises(ParseError, match="not a number"):
            parse_scenario_text(MINIMAL.replace("position = 1  0.0 0.0", "position = 1  0.0 oops"))

    def test_wrong_token_count_rejected(self):
        with pytest.raises(ParseError, match="expected"):
            parse_scenario_text(MINIMAL.replace("edge = 1 2", "edge = 1 2 3"))

    def test_content_before_section_rejected(self):
        with pytest.raises(ParseError, match="before the first section"):
            parse_scenario_text("nodes = 2\n")

    def test_zero_mass_rejected(self):
        text = MINIMAL.replace("[targets]", "mass = *  0.0\n\n[targets]")
        with pytest.raises(ValidationError, match="positive"):
            parse_scenario_text(text)

    def test_cosine_out_of_range_rejected(self):
        text = """
[graph]
nodes = 3
edge = 1 2
edge = 1 3
triple = 1 2 3

[initial]
position = 1  0.0 0.0
position = 2  1.0 0.0
position = 3  0.0 1.0

[targets]
angle = 1  1.5

[gains]
d_a = *  1.0

[sim]
controller = angle
"""
        with pytest.raises(ValidationError, match="cosine"):
            parse_scenario_text(text)

    def test_bearing_normalized_with_warning(self):
        text = """
[graph]
nodes = 2
edge = 1 2

[initial]
position = 1  0.0 0.0
position = 2  1.0 0.0

[targets]
bearing = 1  2.0 0.0

[gains]
d_b = *  1.0 1.0

[sim]
controller = bearing
"""
        with pytest.warns(ScenarioWarning):
            sc = parse_scenario_text(text)
        assert np.allclose(sc.constraints.s_star, [[1.0, 0.0]], atol=0.0)

    def test_binding_out_of_range_rejected(self):
        with pytest.raises(ValidationError):
            parse_scenario_text(MINIMAL.replace("displacement = 1", "displacement = 9"))

    def test_duplicate_binding_rejected(self):
        text = MINIMAL.replace(
            "displacement = 1  1.0 1.0", "displacement = 1  1.0 1.0\ndisplacement = 1  0.0 0.0"
        )
        with pytest.raises(ValidationError, match="twice"):
            parse_scenario_text(text)

    def test_unknown_controller_rejected(self):
        with pytest.raises(ValidationError, match="controller"):
            parse_scenario_text(MINIMAL.replace("controller = displacement", "controller = magic"))

    def test_gain_on_unconstrained_edge_rejected(self):
        text = """
[graph]
nodes = 3
edge = 1 2
edge = 2 3

[initial]
position = 1  0.0 0.0
position = 2  1.0 0.0
position = 3  2.0 0.0

[targets]
distance = 1  1.0

[gains]
d_d = 1  1.0
d_d = 2  1.0

[sim]
controller = distance
"""
        with pytest.raises(ValidationError, match="unconstrained"):
            parse_scenario_text(text)

    def test_wildcard_mixed_with_specific_rejected(self):
        text = MINIMAL.replace("d_t = *  1.0 1.0", "d_t = *  1.0 1.0\nd_t = 1  2.0 2.0")
        with pytest.raises(ValidationError, match="wildcard"):
            parse_scenario_text(text)


class TestBundledScenarios:
    def test_six_scenarios_ship(self):
        assert bundled_scenario_names() == [
            "angle",
            "bearing",
            "displacement_acyclic",
            "displacement_cyclic",
            "distance",
            "heterogeneous",
        ]

    def test_distance_targets(self):
        sc = load_bundled("distance")
        assert sc.controller_kind == "distance"
        lengths = np.sqrt(sc.constraints.dist_star_sq)
        assert np.allclose(lengths, [S2, S2, S2, S2, 2.0], atol=1e-15)

    def test_bearing_targets_are_unit(self):
        sc = load_bundled("bearing")
        norms = np.linalg.norm(sc.constraints.s_star, axis=1)
        assert np.abs(norms - 1.0).max() <= 1e-12

    def test_angle_scenario_shape(self):
        sc = load_bundled("angle")
        assert sc.graph.n_triples == 4
        assert np.allclose(sc.constraints.cos_star, [0.0, S2 / 2, S2 / 2, S2 / 2], atol=1e-15)

    def test_heterogeneous_mixes_three_families(self):
        sc = load_bundled("heterogeneous")
        con = sc.constraints
        assert len(con.dist_edges) == 1
        assert len(con.bearing_edges) == 2
        assert len(con.angle_indices) == 2
        assert len(con.disp_edges) == 0

    def test_common_initial_positions(self):
        q = np.array([[1.0, 1.0], [2.0, 1.0], [2.0, 2.0], [3.0, 2.0]])
        for name in ("displacement_acyclic", "displacement_cyclic", "distance", "bearing"):
            sc = load_bundled(name)
            assert np.array_equal(sc.initial_state.q, q)
            assert np.array_equal(sc.initial_state.p, np.zeros((4, 2)))
            assert np.array_equal(sc.initial_state.masses, np.ones(4))
            assert np.array_equal(sc.gains.v_star, [1.0, 1.0])
            assert not np.any(sc.gains.d_r)

    @pytest.mark.parametrize(
        "name",
        [
            "angle",
            "bearing",
            "displacement_acyclic",
            "displacement_cyclic",
            "distance",
            "heterogeneous",
        ],
    )
    def test_round_trip(self, name, bundled):
        sc = bundled[name]
        again = parse_scenario_text(serialize_scenario(sc), source=f"{name} round trip")
        assert scenarios_equal(sc, again)

    def test_unknown_bundled_name(self):
        with pytest.raises(ValidationError):
            load_bundled("warp-drive")


class TestTargetReconstruction:
    def test_reconstructs_diamond_from_cyclic_displacements(self, bundled):
        sc = bundled["displacement_cyclic"]
        q = reconstruct_target_positions(sc.graph, sc.constraints)
        z = q[[1, 2, 3, 0], :] - q[[0, 1, 2, 3], :]
        assert np.allclose(z, sc.constraints.z_star, atol=1e-12)

    def test_target_configuration_prefers_file_positions(self, bundled):
        sc = bundled["distance"]
        assert np.array_equal(
            target_configuration(sc), [[0.0, 0.0], [-1.0, 1.0], [0.0, 2.0], [1.0, 1.0]]
        )

    def test_missing_targets_raise(self, bundled):
        sc = bundled["distance"]
        stripped = sc.with_overrides(target_positions=None)
        with pytest.raises(MissingTargetShape):
            target_configuration(stripped)

    def test_inconsistent_cycle_rejected(self):
        text = """
[graph]
nodes = 3
edge = 1 2
edge = 2 3
edge = 3 1

[initial]
position = *  0.0 0.0

[targets]
displacement = 1  1.0 0.0
displacement = 2  0.0 1.0
displacement = 3  1.0 1.0

[gains]
d_f = *  1.0 1.0

[sim]
controller = displacement
"""
        # positions coincide initially; that's fine for displacement control
        sc = parse_scenario_text(text)
        with pytest.raises(MissingTargetShape, match="cycle"):
            reconstruct_target_positions(sc.graph, sc.constraints)

    def test_unreadable_path_raises_parse_error(self, tmp_path):
        from phformation.scenario_io import parse_scenario

        with pytest.raises(ParseError, match="cannot read"):
            parse_scenario(tmp_path / "missing.scn")
