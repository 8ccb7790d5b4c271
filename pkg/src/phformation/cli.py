"""Command-line interface: run scenarios, validate files, and check rigidity.

Exit codes: 0 success (converged / valid / rigid); 1 parse or validation
failure; 2 simulation aborted on a degenerate edge or non-finite state;
3 ran to completion but convergence not reached, a dissipation violation
occurred, or the requested rigidity fails.
"""

import argparse
import sys
from pathlib import Path

import numpy as np

from . import reporting, rigidity, scenario_io, topology
from .errors import (
    DegenerateEdge,
    FormationError,
    MissingTargetShape,
    NonFiniteState,
    ParseError,
    ValidationError,
)
from .simulate import convergence_metrics, integrate

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_ABORTED = 2
EXIT_NOT_CONVERGED = 3


def _fail(message: str, code: int) -> int:
    print(f"error: {message}", file=sys.stderr)
    return code


def _run_one(scenario, out_dir: Path) -> int:
    try:
        trajectory = integrate(scenario)
    except (DegenerateEdge, NonFiniteState) as exc:
        return _fail(f"simulation aborted: {exc}", EXIT_ABORTED)
    report = convergence_metrics(trajectory)
    out_dir.mkdir(parents=True, exist_ok=True)
    reporting.write_trajectory_csv(trajectory, out_dir / "trajectory.csv")
    reporting.write_report(report, scenario, out_dir / "report.txt")
    reporting.render_error_figure(trajectory, out_dir / "errors.svg")
    sys.stdout.write(reporting.format_report(report, scenario))
    print(f"outputs written to {out_dir}")
    if not report.converged or report.dissipation_violations:
        return EXIT_NOT_CONVERGED
    return EXIT_OK


def _apply_overrides(scenario, args):
    overrides = {}
    if args.step is not None:
        overrides["step"] = args.step
    if args.horizon is not None:
        overrides["horizon"] = args.horizon
    if overrides:
        try:
            scenario = scenario.with_overrides(**overrides)
        except ValueError as exc:
            raise ValidationError("sim", str(exc)) from None
    return scenario


def cmd_run(args) -> int:
    try:
        scenario = _apply_overrides(scenario_io.parse_scenario(args.scenario), args)
    except (ParseError, ValidationError) as exc:
        return _fail(str(exc), EXIT_INVALID)
    out_dir = Path(args.out) if args.out else Path(scenario.name or "scenario") / "out"
    return _run_one(scenario, out_dir)


def cmd_run_all(args) -> int:
    worst = EXIT_OK
    base = Path(args.out)
    for name in scenario_io.bundled_scenario_names():
        try:
            scenario = _apply_overrides(scenario_io.load_bundled(name), args)
        except (ParseError, ValidationError) as exc:
            return _fail(str(exc), EXIT_INVALID)
        print(f"== {name} ==")
        code = _run_one(scenario, base / name)
        worst = max(worst, code)
    return worst


def cmd_validate(args) -> int:
    try:
        scenario = scenario_io.parse_scenario(args.scenario)
    except (ParseError, ValidationError) as exc:
        return _fail(str(exc), EXIT_INVALID)
    con = scenario.constraints
    print(f"{scenario.name or args.scenario}: OK")
    print(f"  controller: {scenario.controller_kind}")
    print(f"  agents: {scenario.graph.n_nodes}, edges: {scenario.graph.n_edges}, "
          f"angle triples: {scenario.graph.n_triples}")
    print(f"  constraints: {len(con.disp_edges)} displacement, {len(con.dist_edges)} distance, "
          f"{len(con.bearing_edges)} bearing, {len(con.angle_indices)} angle")
    return EXIT_OK


_RIGIDITY_KIND = {
    "distance": "distance",
    "bearing": "bearing",
    "angle": "angle",
    "heterogeneous": "complete",
}


def cmd_check_rigidity(args) -> int:
    try:
        scenario = scenario_io.parse_scenario(args.scenario)
        target = scenario_io.target_configuration(scenario)
    except (ParseError, ValidationError, MissingTargetShape) as exc:
        return _fail(str(exc), EXIT_INVALID)
    print(f"scenario: {scenario.name or args.scenario}")
    print(f"controller: {scenario.controller_kind}")
    if scenario.controller_kind == "displacement":
        # Displacement stabilization needs a connected graph, not rigidity.
        rank = rigidity.numerical_rank(topology.build_incidence(scenario.graph))
        required = scenario.graph.n_nodes - 1
        connected = topology.is_connected(scenario.graph)
        print("check: connectivity")
        print(f"incidence rank: {rank} (required {required})")
        print(f"connected: {'yes' if connected else 'no'}")
        return EXIT_OK if connected else EXIT_NOT_CONVERGED
    kind = _RIGIDITY_KIND[scenario.controller_kind]
    try:
        report = rigidity.check_infinitesimal_rigidity(
            kind, target, scenario.graph, constraints=scenario.constraints
        )
    except DegenerateEdge as exc:
        return _fail(f"degenerate target configuration: {exc}", EXIT_ABORTED)
    except FormationError as exc:
        return _fail(str(exc), EXIT_INVALID)
    print(f"check: {report.kind} rigidity")
    print(f"matrix shape: {report.shape[0]} x {report.shape[1]}")
    print(f"rank: {report.rank} (required {report.required_rank})")
    print(f"rigid: {'yes' if report.is_rigid else 'no'}")
    return EXIT_OK if report.is_rigid else EXIT_NOT_CONVERGED


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="phformation",
        description="Simulate port-Hamiltonian formation control scenarios.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="simulate a scenario file and write outputs")
    p_run.add_argument("scenario", help="path to a scenario file")
    p_run.add_argument("--out", default=None, help="output directory (default <name>/out)")
    p_run.add_argument("--step", type=float, default=None, help="override integration step [s]")
    p_run.add_argument("--horizon", type=float, default=None, help="override horizon [s]")
    p_run.set_defaults(func=cmd_run)

    p_all = sub.add_parser("run-all", help="run every bundled scenario")
    p_all.add_argument("--out", default="out", help="base output directory")
    p_all.add_argument("--step", type=float, default=None, help="override integration step [s]")
    p_all.add_argument("--horizon", type=float, default=None, help="override horizon [s]")
    p_all.set_defaults(func=cmd_run_all)

    p_val = sub.add_parser("validate", help="parse and validate a scenario file")
    p_val.add_argument("scenario", help="path to a scenario file")
    p_val.set_defaults(func=cmd_validate)

    p_rig = sub.add_parser(
        "check-rigidity", help="rigidity report at the scenario's target shape"
    )
    p_rig.add_argument("scenario", help="path to a scenario file")
    p_rig.set_defaults(func=cmd_check_rigidity)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
