"""Exception types shared across the package."""


class FormationError(Exception):
    """Base class for all errors raised by this package."""


class DegenerateEdge(FormationError):
    """An edge or angle ray has (near-)zero length, so bearings are undefined.

    Carries the offending edge or triple index. When raised from the
    integrator, ``trajectory_prefix`` holds the valid samples logged before
    the abort and ``time`` the simulated instant of failure.
    """

    def __init__(self, index, context="edge", time=None, trajectory_prefix=None):
        self.index = index
        self.context = context
        self.time = time
        self.trajectory_prefix = trajectory_prefix
        at = f" at t={time:.6g} s" if time is not None else ""
        super().__init__(f"degenerate {context} {index}{at}: length below guard")


class InsufficientAgents(FormationError):
    """Too few agents for the requested rigidity test."""


class NonFiniteState(FormationError):
    """Integration produced a non-finite coordinate.

    ``trajectory_prefix`` holds the valid samples logged before the abort.
    """

    def __init__(self, time, trajectory_prefix=None):
        self.time = time
        self.trajectory_prefix = trajectory_prefix
        super().__init__(f"non-finite state at t={time:.6g} s")


class ParseError(FormationError):
    """Scenario file is syntactically malformed."""

    def __init__(self, line, field, reason):
        self.line = line
        self.field = field
        self.reason = reason
        super().__init__(f"line {line}, {field}: {reason}")


class ValidationError(FormationError):
    """Scenario content violates a model invariant."""

    def __init__(self, constraint, reason):
        self.constraint = constraint
        self.reason = reason
        super().__init__(f"{constraint}: {reason}")


class MissingTargetShape(FormationError):
    """The target configuration cannot be determined from the scenario."""


class ScenarioWarning(UserWarning):
    """Non-fatal scenario issue, e.g. a bearing target that needed renormalizing."""
