"""Closed-loop assembly, fixed-step RK4 integration, and convergence metrics."""

import math
from dataclasses import dataclass, replace

import numpy as np

from .constraints import ConstraintSet
from .control import GainConfig
from .energy import CONTROLLER_KINDS, SwarmState, constraint_errors, total_hamiltonian
from .errors import DegenerateEdge, NonFiniteState
from .rigidity import DEGENERACY_EPS
from .topology import FormationGraph


@dataclass(frozen=True)
class Scenario:
    """A complete simulation setup: network, initial state, targets, gains, and clock."""

    graph: FormationGraph
    initial_state: SwarmState
    constraints: ConstraintSet
    gains: GainConfig
    controller_kind: str
    horizon: float = 30.0
    step: float = 1e-3
    sample_stride: int = 10
    convergence_tol: float = 1e-3
    dissipation_slack: float = 1e-8
    name: str = ""
    description: str = ""
    target_positions: np.ndarray = None

    def __post_init__(self):
        if self.controller_kind not in CONTROLLER_KINDS:
            raise ValueError(f"unknown controller kind {self.controller_kind!r}")
        if not (self.step > 0.0):
            raise ValueError("step must be positive")
        if self.horizon < self.step:
            raise ValueError("horizon must be at least one step")
        if self.sample_stride < 1:
            raise ValueError("sample_stride must be >= 1")
        self.constraints.validate_against(self.graph)
        if self.initial_state.n_agents != self.graph.n_nodes:
            raise ValueError("initial state does not match the graph's node count")
        if self.target_positions is not None:
            tp = np.asarray(self.target_positions, dtype=float).reshape(self.graph.n_nodes, -1)
            tp.flags.writeable = False
            object.__setattr__(self, "target_positions", tp)

    def with_overrides(self, **kwargs) -> "Scenario":
        return replace(self, **kwargs)


@dataclass(frozen=True)
class Trajectory:
    """Time-indexed log of a simulation run.

    Positions/momenta are (K, N, d); error series are aligned with the
    scenario's constraint bindings; ``hamiltonian`` is the total closed-loop
    energy per sample and ``dissipation_rate`` its discrete time-derivative
    ((H_k - H_{k-1}) / dt, zero for the first sample).
    """

    scenario: Scenario
    times: np.ndarray
    positions: np.ndarray
    momenta: np.ndarray
    e_z: np.ndarray
    e_d: np.ndarray
    e_b: np.ndarray
    e_a: np.ndarray
    hamiltonian: np.ndarray
    dissipation_rate: np.ndarray

    @property
    def n_samples(self) -> int:
        return len(self.times)

    def state_at(self, k: int) -> SwarmState:
        return SwarmState(
            q=self.positions[k], p=self.momenta[k], masses=self.scenario.initial_state.masses
        )

    @property
    def velocity_errors(self) -> np.ndarray:
        masses = self.scenario.initial_state.masses
        return self.momenta / masses[None, :, None] - self.scenario.gains.v_star


@dataclass(frozen=True)
class ConvergenceReport:
    final_error_norms: dict
    final_velocity_error_norm: float
    time_to_tolerance: float
    tolerance: float
    dissipation_violations: int

    @property
    def converged(self) -> bool:
        return self.time_to_tolerance is not None


@dataclass(frozen=True)
class DissipationReport:
    violations: int
    violation_times: tuple
    max_rate: float
    slack_coefficient: float


class _Dynamics:
    """Precompiled closed-loop derivative for one scenario.

    Flat state layout: y = (q_1, ..., q_N, p_1, ..., p_N) agent-major.
    Formation forces are assembled through small dense incidence products so
    a derivative evaluation costs a handful of numpy calls.
    """

    def __init__(self, scenario: Scenario, masses: np.ndarray, eps: float = DEGENERACY_EPS):
        graph = scenario.graph
        con = scenario.constraints
        gains = scenario.gains
        kind = scenario.controller_kind
        self.n = graph.n_nodes
        self.eps = eps
        self.inv_m = (1.0 / np.asarray(masses, dtype=float))[:, None]
        self.v_star = gains.v_star
        self.d_r = gains.d_r
        self.has_friction = bool(np.any(self.d_r))
        self.d_t = gains.d_t
        # Gains are usually diagonal blocks; keep a cheap multiply path for them.
        self.d_t_diag = self._diag_or_none(gains.d_t)
        self.d_r_diag = self._diag_or_none(gains.d_r)
        # Constant first term of the tracking law, -D^r v*.
        feed = np.einsum("nij,j->ni", gains.d_r, gains.v_star)
        self.friction_feed = feed if np.any(feed) else None

        def sub_incidence(edge_ids):
            b = np.zeros((self.n, len(edge_ids)))
            for col, j in enumerate(edge_ids):
                tail, head = graph.edges[j]
                b[tail, col] = -1.0
                b[head, col] = 1.0
            return b

        self.disp = None
        if kind in ("displacement", "heterogeneous") and con.disp_edges:
            b = sub_incidence(con.disp_edges)
            self.disp = (b, b.T, con.z_star, gains.d_f, self._diag_or_none(gains.d_f))
        self.dist = None
        if kind in ("distance", "heterogeneous") and con.dist_edges:
            b = sub_incidence(con.dist_edges)
            self.dist = (b, b.T, con.dist_star_sq, gains.d_d)
        self.bear = None
        if kind in ("bearing", "heterogeneous") and con.bearing_edges:
            b = sub_incidence(con.bearing_edges)
            d_b_diag = np.ascontiguousarray(np.diagonal(gains.d_b, axis1=1, axis2=2))
            self.bear = (b, b.T, con.s_star, d_b_diag, tuple(con.bearing_edges))
        self.angle = None
        if kind in ("angle", "heterogeneous") and con.angle_indices:
            triples = [graph.angle_triples[l] for l in con.angle_indices]
            m = len(triples)
            sel = np.zeros((3 * m, self.n))
            for row, (v, a, b_) in enumerate(triples):
                sel[row, v] = 1.0
                sel[m + row, a] = 1.0
                sel[2 * m + row, b_] = 1.0
            diff = np.vstack([sel[m : 2 * m] - sel[:m], sel[2 * m :] - sel[:m]])
            self.angle = (m, diff, sel, sel.T, con.cos_star, gains.d_a, tuple(con.angle_indices))

    @staticmethod
    def _diag_or_none(blocks):
        """(E, d) diagonal entries when every block is diagonal, else None."""
        if blocks.size == 0:
            return np.zeros((0, 2))
        diag = np.ascontiguousarray(np.diagonal(blocks, axis1=1, axis2=2))
        rebuilt = diag[:, :, None] * np.eye(blocks.shape[-1])
        return diag if np.array_equal(rebuilt, blocks) else None

    def __call__(self, t: float, y: np.ndarray) -> np.ndarray:
        n = self.n
        qp = y.reshape(2 * n, 2)
        q = qp[:n]
        p = qp[n:]
        v = p * self.inv_m
        xi = v - self.v_star
        if self.d_t_diag is not None:
            force = -(self.d_t_diag * xi)
        else:
            force = -np.einsum("nij,nj->ni", self.d_t, xi)
        if self.friction_feed is not None:
            force = force - self.friction_feed
        if self.has_friction:
            if self.d_r_diag is not None:
                force = force - self.d_r_diag * v
            else:
                force = force - np.einsum("nij,nj->ni", self.d_r, v)
        if self.disp is not None:
            b, bt, z_star, d_f, d_f_diag = self.disp
            z = bt @ q
            zdot = bt @ v
            if d_f_diag is not None:
                tau = (z - z_star) + d_f_diag * zdot
            else:
                tau = (z - z_star) + np.einsum("eij,ej->ei", d_f, zdot)
            force -= b @ tau
        if self.dist is not None:
            b, bt, star_sq, d_d = self.dist
            z = bt @ q
            zdot = bt @ v
            e = np.einsum("ei,ei->e", z, z) - star_sq
            edot = np.einsum("ei,ei->e", z, zdot)
            tau = e + d_d * edot
            force -= b @ (tau[:, None] * z)
        if self.bear is not None:
            b, bt, s_star, d_b_diag, edge_ids = self.bear
            z = bt @ q
            norms = np.sqrt(np.einsum("ei,ei->e", z, z))
            short = norms <= self.eps
            if short.any():
                raise DegenerateEdge(edge_ids[int(np.argmax(short))], time=t)
            s = z / norms[:, None]
            zdot = bt @ v
            sdot = (zdot - s * np.einsum("ei,ei->e", s, zdot)[:, None]) / norms[:, None]
            tau = (s - s_star) + d_b_diag * sdot
            w = tau - s * np.einsum("ei,ei->e", s, tau)[:, None]
            force -= b @ (w / norms[:, None])
        if self.angle is not None:
            m, diff, sel, scatter, cos_star, d_a, ids = self.angle
            zz = diff @ q
            zk = zz[:m]
            zj = zz[m:]
            nk = np.sqrt(np.einsum("ei,ei->e", zk, zk))
            nj = np.sqrt(np.einsum("ei,ei->e", zj, zj))
            if (nk <= self.eps).any() or (nj <= self.eps).any():
                bad = int(np.argmax((nk <= self.eps) | (nj <= self.eps)))
                raise DegenerateEdge(ids[bad], context="angle triple", time=t)
            sk = zk / nk[:, None]
            sj = zj / nj[:, None]
            cos_t = np.einsum("ei,ei->e", sk, sj)
            l2 = (sj - cos_t[:, None] * sk) / nk[:, None]
            l3 = (sk - cos_t[:, None] * sj) / nj[:, None]
            l1 = -(l2 + l3)
            rows = np.concatenate([l1, l2, l3])
            edot = np.einsum("ei,ei->e", rows, sel @ v)
            tau = (cos_t - cos_star) + d_a * (edot[:m] + edot[m : 2 * m] + edot[2 * m :])
            force -= scatter @ (np.tile(tau, 3)[:, None] * rows)
        return np.concatenate([v.reshape(-1), force.reshape(-1)])


def closed_loop_derivative(state: SwarmState, scenario: Scenario):
    """Time derivative (qdot, pdot) of the closed loop at the given state."""
    dyn = _Dynamics(scenario, state.masses)
    y = np.concatenate([state.q.reshape(-1), state.p.reshape(-1)])
    ydot = dyn(0.0, y)
    n = state.n_agents
    return ydot[: 2 * n].reshape(n, 2), ydot[2 * n :].reshape(n, 2)


def _build_trajectory(scenario, times, positions, momenta):
    """Recompute error and energy series from logged states."""
    k = len(times)
    graph, con = scenario.graph, scenario.constraints
    masses = scenario.initial_state.masses
    e_z = np.zeros((k, len(con.disp_edges), 2))
    e_d = np.zeros((k, len(con.dist_edges)))
    e_b = np.zeros((k, len(con.bearing_edges), 2))
    e_a = np.zeros((k, len(con.angle_indices)))
    ham = np.zeros(k)
    valid = k
    for i in range(k):
        try:
            err = constraint_errors(positions[i], graph, con)
        except DegenerateEdge:
            valid = i
            break
        e_z[i], e_d[i], e_b[i], e_a[i] = err.e_z, err.e_d, err.e_b, err.e_a
        state = SwarmState(q=positions[i], p=momenta[i], masses=masses)
        ham[i] = total_hamiltonian(state, err, scenario.controller_kind, scenario.gains.v_star)
    sl = slice(0, valid)
    rate = np.zeros(valid)
    if valid > 1:
        dt = np.diff(times[sl])
        rate[1:] = np.diff(ham[sl]) / dt
    return Trajectory(
        scenario=scenario,
        times=times[sl].copy(),
        positions=positions[sl].copy(),
        momenta=momenta[sl].copy(),
        e_z=e_z[sl],
        e_d=e_d[sl],
        e_b=e_b[sl],
        e_a=e_a[sl],
        hamiltonian=ham[sl],
        dissipation_rate=rate,
    )


def integrate(scenario: Scenario) -> Trajectory:
    """Classical fixed-step RK4 over [0, horizon], sampling every sample_stride steps.

    Raises DegenerateEdge or NonFiniteState with the valid trajectory prefix
    attached when the run cannot continue.
    """
    state0 = scenario.initial_state
    n = state0.n_agents
    dyn = _Dynamics(scenario, state0.masses)
    step = scenario.step
    n_full = int(math.floor(scenario.horizon / step + 1e-9))
    remainder = scenario.horizon - n_full * step
    if remainder < 1e-12 * max(1.0, scenario.horizon):
        remainder = 0.0
    n_steps = n_full + (1 if remainder else 0)
    stride = scenario.sample_stride

    sample_steps = list(range(0, n_steps + 1, stride))
    if sample_steps[-1] != n_steps:
        sample_steps.append(n_steps)
    sample_index = {s: i for i, s in enumerate(sample_steps)}
    k = len(sample_steps)
    times = np.zeros(k)
    positions = np.zeros((k, n, 2))
    momenta = np.zeros((k, n, 2))

    y = np.concatenate([state0.q.reshape(-1), state0.p.reshape(-1)])
    logged = 0

    def record(step_idx, t, yv):
        nonlocal logged
        i = sample_index.get(step_idx)
        if i is None:
            return
        times[i] = t
        positions[i] = yv[: 2 * n].reshape(n, 2)
        momenta[i] = yv[2 * n :].reshape(n, 2)
        logged = i + 1

    def prefix():
        return _build_trajectory(scenario, times[:logged], positions[:logged], momenta[:logged])

    record(0, 0.0, y)
    t = 0.0
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        for i in range(n_steps):
            h = step if i < n_full else remainder
            try:
                k1 = dyn(t, y)
                k2 = dyn(t + 0.5 * h, y + (0.5 * h) * k1)
                k3 = dyn(t + 0.5 * h, y + (0.5 * h) * k2)
                k4 = dyn(t + h, y + h * k3)
            except DegenerateEdge as exc:
                exc.time = t
                exc.trajectory_prefix = prefix()
                raise
            y = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            t = (i + 1) * step if i + 1 <= n_full else scenario.horizon
            if not np.all(np.isfinite(y)):
                raise NonFiniteState(t, trajectory_prefix=prefix())
            record(i + 1, t, y)
    return prefix()


def dissipation_monitor(trajectory: Trajectory, slack_coefficient: float = None) -> DissipationReport:
    """Flag sampling intervals whose discrete energy rate exceeds the slack.

    The allowance per interval is slack_coefficient * (1 + |H_k|), an
    integration-error budget relative to the energy at the interval start.
    """
    if trajectory.n_samples < 2:
        raise ValueError("dissipation monitoring needs at least two samples")
    coef = (
        trajectory.scenario.dissipation_slack if slack_coefficient is None else slack_coefficient
    )
    rate = trajectory.dissipation_rate[1:]
    slack = coef * (1.0 + np.abs(trajectory.hamiltonian[:-1]))
    bad = np.flatnonzero(rate > slack)
    return DissipationReport(
        violations=int(bad.size),
        violation_times=tuple(float(trajectory.times[i + 1]) for i in bad),
        max_rate=float(rate.max(initial=-np.inf)),
        slack_coefficient=coef,
    )


def _family_series(trajectory):
    """Per-sample max-abs error for each active constraint family."""
    out = {}
    if trajectory.e_z.shape[1]:
        out["displacement"] = np.abs(trajectory.e_z).max(axis=(1, 2))
    if trajectory.e_d.shape[1]:
        out["distance"] = np.abs(trajectory.e_d).max(axis=1)
    if trajectory.e_b.shape[1]:
        out["bearing"] = np.abs(trajectory.e_b).max(axis=(1, 2))
    if trajectory.e_a.shape[1]:
        out["angle"] = np.abs(trajectory.e_a).max(axis=1)
    return out


def convergence_metrics(trajectory: Trajectory, tol: float = None) -> ConvergenceReport:
    """Final error norms, time-to-tolerance, and dissipation violations."""
    if trajectory.n_samples == 0:
        raise ValueError("empty trajectory")
    tol = trajectory.scenario.convergence_tol if tol is None else tol
    families = _family_series(trajectory)
    xi = np.abs(trajectory.velocity_errors).max(axis=(1, 2))
    combined = xi.copy()
    for series in families.values():
        combined = np.maximum(combined, series)
    below = combined <= tol
    time_to_tol = None
    if below[-1]:
        idx = len(below) - 1
        while idx > 0 and below[idx - 1]:
            idx -= 1
        time_to_tol = float(trajectory.times[idx])
    violations = 0
    if trajectory.n_samples >= 2:
        violations = dissipation_monitor(trajectory).violations
    return ConvergenceReport(
        final_error_norms={name: float(series[-1]) for name, series in families.items()},
        final_velocity_error_norm=float(xi[-1]),
        time_to_tolerance=time_to_tol,
        tolerance=tol,
        dissipation_violations=violations,
    )
