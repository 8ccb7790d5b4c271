"""Trajectory CSV emission, convergence report text, and error figures.

All outputs are deterministic: CSV floats use 17-significant-digit formatting
with '.' decimals and LF line endings, and figures are rendered through the
Agg backend with a fixed hash salt and no date metadata, so two runs of the
same scenario produce byte-identical files.
"""

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

import numpy as np

from .simulate import ConvergenceReport, Scenario, Trajectory

_SVG_HASH_SALT = "phformation"


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def trajectory_header(trajectory: Trajectory) -> list:
    """CSV column names: time, positions, velocity errors, constraint errors, energy."""
    scenario = trajectory.scenario
    n = scenario.graph.n_nodes
    cols = ["t"]
    cols += [f"q{i + 1}_{axis}" for i in range(n) for axis in ("x", "y")]
    cols += [f"xi{i + 1}_{axis}" for i in range(n) for axis in ("x", "y")]
    con = scenario.constraints
    cols += [f"e_z{j + 1}_{axis}" for j in con.disp_edges for axis in ("x", "y")]
    cols += [f"e_d{j + 1}" for j in con.dist_edges]
    cols += [f"e_b{j + 1}_{axis}" for j in con.bearing_edges for axis in ("x", "y")]
    cols += [f"e_a{l + 1}" for l in con.angle_indices]
    cols += ["H", "Hdot_est"]
    return cols


def trajectory_rows(trajectory: Trajectory) -> np.ndarray:
    """Numeric matrix matching trajectory_header, one row per sample."""
    k = trajectory.n_samples
    xi = trajectory.velocity_errors
    blocks = [
        trajectory.times[:, None],
        trajectory.positions.reshape(k, -1),
        xi.reshape(k, -1),
        trajectory.e_z.reshape(k, -1),
        trajectory.e_d.reshape(k, -1),
        trajectory.e_b.reshape(k, -1),
        trajectory.e_a.reshape(k, -1),
        trajectory.hamiltonian[:, None],
        trajectory.dissipation_rate[:, None],
    ]
    return np.hstack(blocks)


def write_trajectory_csv(trajectory: Trajectory, path) -> None:
    header = trajectory_header(trajectory)
    rows = trajectory_rows(trajectory)
    with open(path, "w", encoding="utf-8", newline="") as handle:
        handle.write(",".join(header) + "\n")
        for row in rows:
            handle.write(",".join(_fmt(v) for v in row) + "\n")


def format_report(report: ConvergenceReport, scenario: Scenario) -> str:
    lines = [
        f"scenario: {scenario.name}",
        f"controller: {scenario.controller_kind}",
        f"horizon: {_fmt(scenario.horizon)} s",
        f"step: {_fmt(scenario.step)} s",
        f"final velocity error norm: {_fmt(report.final_velocity_error_norm)}",
        "final error norms:",
    ]
    for family, value in report.final_error_norms.items():
        lines.append(f"  {family}: {_fmt(value)}")
    if report.time_to_tolerance is None:
        lines.append(f"time to tolerance ({_fmt(report.tolerance)}): not reached")
    else:
        lines.append(
            f"time to tolerance ({_fmt(report.tolerance)}): {_fmt(report.time_to_tolerance)} s"
        )
    lines.append(f"dissipation violations: {report.dissipation_violations}")
    lines.append(f"converged: {'yes' if report.converged else 'no'}")
    return "\n".join(lines) + "\n"


def write_report(report: ConvergenceReport, scenario: Scenario, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as handle:
        handle.write(format_report(report, scenario))


def _error_curves(trajectory: Trajectory):
    """(label, series) pairs for every constraint error component."""
    con = trajectory.scenario.constraints
    curves = []
    for pos, j in enumerate(con.disp_edges):
        curves.append((f"e_z{j + 1},x", trajectory.e_z[:, pos, 0]))
        curves.append((f"e_z{j + 1},y", trajectory.e_z[:, pos, 1]))
    for pos, j in enumerate(con.dist_edges):
        curves.append((f"e_d{j + 1}", trajectory.e_d[:, pos]))
    for pos, j in enumerate(con.bearing_edges):
        curves.append((f"e_b{j + 1},x", trajectory.e_b[:, pos, 0]))
        curves.append((f"e_b{j + 1},y", trajectory.e_b[:, pos, 1]))
    for pos, l in enumerate(con.angle_indices):
        curves.append((f"e_a{l + 1}", trajectory.e_a[:, pos]))
    return curves


def render_error_figure(trajectory: Trajectory, path) -> None:
    """Two-panel SVG: constraint error components and velocity errors vs time."""
    plt.rcParams["svg.hashsalt"] = _SVG_HASH_SALT
    t = trajectory.times
    fig, (ax_err, ax_vel) = plt.subplots(2, 1, figsize=(7.0, 7.0), sharex=True)
    for label, series in _error_curves(trajectory):
        ax_err.plot(t, series, linewidth=1.0, label=label)
    ax_err.set_ylabel("constraint error")
    ax_err.grid(True, alpha=0.3)
    if trajectory.scenario.constraints.n_constraints:
        ax_err.legend(fontsize=7, ncol=2)
    xi = trajectory.velocity_errors
    for i in range(xi.shape[1]):
        ax_vel.plot(t, xi[:, i, 0], linewidth=1.0, label=f"xi{i + 1},x")
        ax_vel.plot(t, xi[:, i, 1], linewidth=1.0, label=f"xi{i + 1},y")
    ax_vel.set_xlabel("time [s]")
    ax_vel.set_ylabel("velocity error")
    ax_vel.grid(True, alpha=0.3)
    ax_vel.legend(fontsize=7, ncol=2)
    title = trajectory.scenario.name or trajectory.scenario.controller_kind
    ax_err.set_title(f"{title}: error evolution")
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
