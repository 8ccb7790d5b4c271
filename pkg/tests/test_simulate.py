import numpy as np
import pytest

from phformation import control
from phformation.constraints import ConstraintSet
from phformation.control import GainConfig, uniform_gains
from phformation.energy import SwarmState
from phformation.errors import DegenerateEdge, NonFiniteState
from phformation.simulate import (
    Scenario,
    Trajectory,
    closed_loop_derivative,
    convergence_metrics,
    dissipation_monitor,
    integrate,
)
from phformation.topology import FormationGraph

from conftest import spread_positions

S2 = np.sqrt(2.0)
PATH4 = FormationGraph(4, edges=((0, 1), (1, 2), (2, 3)))
Q_INIT = np.array([[1.0, 1.0], [2.0, 1.0], [2.0, 2.0], [3.0, 2.0]])
DIAMOND = np.array([[0.0, 0.0], [-1.0, 1.0], [0.0, 2.0], [1.0, 1.0]])


def make_scenario(**overrides):
    base = dict(
        graph=PATH4,
        initial_state=SwarmState(q=Q_INIT, p=np.zeros((4, 2)), masses=np.ones(4)),
        constraints=ConstraintSet(disp_edges=(0, 1, 2), z_star=[[-1, 1], [1, 1], [1, -1]]),
        gains=uniform_gains(4, (1.0, 1.0), d_t=1.0, n_disp=3, d_f=1.0),
        controller_kind="displacement",
    )
    base.update(overrides)
    return Scenario(**base)


class TestScenarioValidation:
    def test_rejects_zero_step(self):
        with pytest.raises(ValueError, match="step"):
            make_scenario(step=0.0)

    def test_rejects_horizon_below_step(self):
        with pytest.raises(ValueError, match="horizon"):
            make_scenario(horizon=1e-4, step=1e-3)

    def test_rejects_dangling_binding(self):
        con = ConstraintSet(disp_edges=(0, 1, 7), z_star=np.zeros((3, 2)))
        with pytest.raises(ValueError, match="missing index"):
            make_scenario(constraints=con)

    def test_rejects_unknown_controller(self):
        with pytest.raises(ValueError, match="controller"):
            make_scenario(controller_kind="teleport")


class TestClosedLoopDerivative:
    def test_equilibrium_of_error_system(self):
        v = np.array([1.0, 1.0])
        sc = make_scenario(
            graph=FormationGraph(4, edges=((0, 1), (1, 2), (2, 3), (3, 0), (3, 1))),
            constraints=ConstraintSet(
                disp_edges=(0, 1, 2, 3, 4),
                z_star=[[-1, 1], [1, 1], [1, -1], [-1, -1], [-2, 0]],
            ),
            gains=uniform_gains(4, v, d_t=1.0, n_disp=5, d_f=1.0),
        )
        st = SwarmState(q=DIAMOND, p=np.tile(v, (4, 1)), masses=np.ones(4))
        qdot, pdot = closed_loop_derivative(st, sc)
        assert np.allclose(qdot, np.tile(v, (4, 1)), atol=1e-15)
        assert np.abs(pdot).max() <= 1e-14

    def test_initial_derivative_golden_value(self):
        # qdot(0) = 0 since p(0) = 0; pdot(0) = u_velocity + u_displacement,
        # both evaluated long-hand for the bundled acyclic scenario.
        sc = make_scenario()
        qdot, pdot = closed_loop_derivative(sc.initial_state, sc)
        assert np.abs(qdot).max() == 0.0
        assert np.allclose(pdot, [[3, 0], [-2, 2], [2, 2], [1, 0]], atol=1e-14)

    def test_reduces_to_pure_tracking_without_constraints(self, rng):
        g = FormationGraph(3)
        q = spread_positions(rng, 3)
        p = rng.normal(size=(3, 2))
        masses = rng.uniform(0.5, 2.0, size=3)
        v = rng.normal(size=2)
        sc = Scenario(
            graph=g,
            initial_state=SwarmState(q=q, p=p, masses=masses),
            constraints=ConstraintSet(),
            gains=uniform_gains(3, v, d_t=1.3),
            controller_kind="displacement",
        )
        qdot, pdot = closed_loop_derivative(sc.initial_state, sc)
        p_bar = p - masses[:, None] * v
        assert np.allclose(pdot, -1.3 * p_bar / masses[:, None], atol=1e-14)

    @pytest.mark.parametrize(
        "kind", ["displacement", "distance", "bearing", "angle", "heterogeneous"]
    )
    def test_matches_control_module_laws(self, rng, kind):
        # The compiled fast path must agree with the public force laws.
        g = FormationGraph(
            4,
            edges=((0, 1), (1, 2), (2, 3), (3, 0), (3, 1)),
            angle_triples=((0, 1, 3), (1, 0, 3)),
        )
        con = ConstraintSet(
            disp_edges=(0,),
            z_star=[[0.5, -0.5]],
            dist_edges=(1, 2),
            dist_star_sq=[1.0, 2.0],
            bearing_edges=(3, 4),
            s_star=[[0.0, 1.0], [-1.0, 0.0]],
            angle_indices=(0, 1),
            cos_star=[0.1, -0.3],
        )
        masses = rng.uniform(0.5, 2.0, size=4)
        gains = GainConfig(
            v_star=rng.normal(size=2),
            d_r=np.stack([np.diag(rng.uniform(0.0, 1.0, size=2)) for _ in range(4)]),
            d_t=np.stack([np.diag(rng.uniform(0.2, 1.5, size=2)) for _ in range(4)]),
            d_f=rng.uniform(0.1, 1.0) * np.repeat(np.eye(2)[None], 1, axis=0),
            d_d=rng.uniform(0.0, 2.0, size=2),
            d_b=np.stack([np.diag(rng.uniform(0.0, 2.0, size=2)) for _ in range(2)]),
            d_a=rng.uniform(0.0, 2.0, size=2),
        )
        for _ in range(5):
            st = SwarmState(q=spread_positions(rng, 4), p=rng.normal(size=(4, 2)), masses=masses)
            sc = Scenario(
                graph=g, initial_state=st, constraints=con, gains=gains, controller_kind=kind
            )
            qdot, pdot = closed_loop_derivative(st, sc)
            v = st.velocities
            expected_pdot = (
                -np.einsum("nij,nj->ni", gains.d_r, v)
                + control.u_velocity(st, gains)
                + control.u_formation(kind, st, g, con, gains)
            )
            assert np.allclose(qdot, v, atol=1e-15)
            assert np.allclose(pdot, expected_pdot, rtol=1e-12, atol=1e-12)


class TestIntegrate:
    def test_single_agent_exponential_tracking(self):
        # pbar obeys pbardot = -pbar, so |pbar(10)| = exp(-10) |pbar(0)|.
        g = FormationGraph(1)
        v = np.array([1.0, 1.0])
        sc = Scenario(
            graph=g,
            initial_state=SwarmState(q=np.zeros((1, 2)), p=np.zeros((1, 2)), masses=np.ones(1)),
            constraints=ConstraintSet(),
            gains=uniform_gains(1, v, d_t=1.0),
            controller_kind="displacement",
            horizon=10.0,
            step=1e-3,
        )
        traj = integrate(sc)
        p_bar = traj.momenta[-1, 0] - v
        assert np.linalg.norm(p_bar) <= 1e-4
        exact = np.exp(-10.0) * np.sqrt(2.0)
        assert np.linalg.norm(p_bar) == pytest.approx(exact, rel=1e-6)

    def test_horizon_equal_step_gives_two_samples(self):
        sc = make_scenario(horizon=1e-3, step=1e-3)
        traj = integrate(sc)
        assert traj.n_samples == 2
        assert traj.times[0] == 0.0
        assert traj.times[-1] == pytest.approx(1e-3, abs=0.0)

    def test_fractional_final_step(self):
        sc = make_scenario(horizon=0.0105, step=1e-3, sample_stride=1)
        traj = integrate(sc)
        assert traj.times[-1] == pytest.approx(0.0105, abs=1e-15)
        assert traj.n_samples == 12

    def test_step_halving_order(self):
        sc = make_scenario(horizon=4.0)
        finals = []
        for h in (0.05, 0.025, 0.0125):
            traj = integrate(sc.with_overrides(step=h, sample_stride=1_000_000))
            finals.append(
                np.concatenate([traj.positions[-1].ravel(), traj.momenta[-1].ravel()])
            )
        d1 = np.linalg.norm(finals[0] - finals[1])
        d2 = np.linalg.norm(finals[1] - finals[2])
        order = np.log2(d1 / d2)
        assert order >= 3.5

    def test_energy_nonincreasing_short_run(self):
        sc = make_scenario(horizon=3.0)
        traj = integrate(sc)
        report = dissipation_monitor(traj)
        assert report.violations == 0
        assert traj.hamiltonian.min() >= 0.0
        assert np.all(np.diff(traj.times) > 0.0)

    def test_equilibrium_persistence(self):
        v = np.array([1.0, 1.0])
        sc = make_scenario(
            initial_state=SwarmState(
                q=np.array([[0.0, 0.0], [-1.0, 1.0], [0.0, 2.0], [1.0, 1.0]]),
                p=np.tile(v, (4, 1)),
                masses=np.ones(4),
            ),
            horizon=5.0,
        )
        traj = integrate(sc)
        assert np.abs(traj.e_z).max() <= 1e-9
        assert np.abs(traj.velocity_errors).max() <= 1e-9

    def test_translation_equivariance(self, rng):
        w = rng.normal(size=2)
        sc = make_scenario(horizon=2.0)
        shifted = make_scenario(
            initial_state=SwarmState(q=Q_INIT + w, p=np.zeros((4, 2)), masses=np.ones(4)),
            horizon=2.0,
        )
        t1 = integrate(sc)
        t2 = integrate(shifted)
        assert np.abs((t2.positions - t1.positions) - w).max() <= 1e-10
        assert np.abs(t2.e_z - t1.e_z).max() <= 1e-10
        assert np.abs(t2.hamiltonian - t1.hamiltonian).max() <= 1e-10

    def test_degenerate_initial_state_aborts_with_prefix(self):
        g = FormationGraph(2, edges=((0, 1),))
        sc = Scenario(
            graph=g,
            initial_state=SwarmState(
                q=np.array([[0.0, 0.0], [0.0, 0.0]]), p=np.zeros((2, 2)), masses=np.ones(2)
            ),
            constraints=ConstraintSet(bearing_edges=(0,), s_star=[[1.0, 0.0]]),
            gains=uniform_gains(2, (0.0, 0.0), d_t=1.0, n_bearing=1, d_b=1.0),
            controller_kind="bearing",
        )
        with pytest.raises(DegenerateEdge) as excinfo:
            integrate(sc)
        exc = excinfo.value
        assert exc.index == 0
        assert exc.trajectory_prefix is not None
        assert exc.trajectory_prefix.n_samples == 0

    def test_unstable_step_aborts_non_finite(self):
        sc = make_scenario(step=5.0, horizon=500.0)
        with pytest.raises(NonFiniteState) as excinfo:
            integrate(sc)
        prefix = excinfo.value.trajectory_prefix
        assert prefix is not None
        assert prefix.n_samples >= 1
        assert np.all(np.isfinite(prefix.positions))


class TestDissipationMonitor:
    def test_constant_state_zero_rate(self):
        v = np.array([0.0, 0.0])
        sc = make_scenario(
            initial_state=SwarmState(
                q=np.array([[0.0, 0.0], [-1.0, 1.0], [0.0, 2.0], [1.0, 1.0]]),
                p=np.zeros((4, 2)),
                masses=np.ones(4),
            ),
            gains=uniform_gains(4, v, d_t=1.0, n_disp=3, d_f=1.0),
            horizon=1.0,
        )
        traj = integrate(sc)
        assert np.abs(traj.dissipation_rate).max() == 0.0
        assert dissipation_monitor(traj).violations == 0

    def test_rising_energy_flagged(self):
        base = integrate(make_scenario(horizon=1.0))
        k = base.n_samples
        rising = np.linspace(1.0, 2.0, k)
        rate = np.zeros(k)
        rate[1:] = np.diff(rising) / np.diff(base.times)
        doctored = Trajectory(
            scenario=base.scenario,
            times=base.times,
            positions=base.positions,
            momenta=base.momenta,
            e_z=base.e_z,
            e_d=base.e_d,
            e_b=base.e_b,
            e_a=base.e_a,
            hamiltonian=rising,
            dissipation_rate=rate,
        )
        report = dissipation_monitor(doctored)
        assert report.violations == k - 1
        assert report.max_rate > 0.0

    def test_needs_two_samples(self):
        traj = integrate(make_scenario(horizon=1.0))
        single = Trajectory(
            scenario=traj.scenario,
            times=traj.times[:1],
            positions=traj.positions[:1],
            momenta=traj.momenta[:1],
            e_z=traj.e_z[:1],
            e_d=traj.e_d[:1],
            e_b=traj.e_b[:1],
            e_a=traj.e_a[:1],
            hamiltonian=traj.hamiltonian[:1],
            dissipation_rate=traj.dissipation_rate[:1],
        )
        with pytest.raises(ValueError):
            dissipation_monitor(single)


class TestConvergenceMetrics:
    def test_equilibrium_throughout_reaches_immediately(self):
        v = np.array([1.0, 1.0])
        sc = make_scenario(
            initial_state=SwarmState(
                q=np.array([[0.0, 0.0], [-1.0, 1.0], [0.0, 2.0], [1.0, 1.0]]),
                p=np.tile(v, (4, 1)),
                masses=np.ones(4),
            ),
            horizon=1.0,
        )
        report = convergence_metrics(integrate(sc))
        assert report.time_to_tolerance == 0.0
        assert report.converged

    def test_zero_gains_never_reach(self):
        # No tracking damping and targets already met: every force is zero,
        # errors stay constant, and the velocity error never decays.
        sc = make_scenario(
            initial_state=SwarmState(
                q=np.array([[0.0, 0.0], [-1.0, 1.0], [0.0, 2.0], [1.0, 1.0]]),
                p=np.zeros((4, 2)),
                masses=np.ones(4),
            ),
            gains=uniform_gains(4, (1.0, 1.0), d_t=0.0, n_disp=3, d_f=0.0),
            horizon=1.0,
        )
        report = convergence_metrics(integrate(sc))
        assert report.time_to_tolerance is None
        assert not report.converged
        assert report.final_velocity_error_norm == pytest.approx(1.0, abs=1e-14)

    def test_family_norms_populated(self):
        report = convergence_metrics(integrate(make_scenario(horizon=2.0)))
        assert set(report.final_error_norms) == {"displacement"}
        assert report.final_error_norms["displacement"] >= 0.0
