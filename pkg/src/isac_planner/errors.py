"""Exception types shared across the planner."""


class PlannerError(Exception):
    """Base class for all planner errors."""


class ParseError(PlannerError):
    """Scenario file is malformed or has the wrong shape."""


class ValidationError(PlannerError):
    """A scenario invariant is violated; the message names the field."""


class DegenerateGeometry(PlannerError):
    """Link geometry inside the 1 m reference distance; gains undefined."""


class DegenerateAnchor(PlannerError):
    """Collision constraint cannot be linearized at coincident anchors."""


class InfeasibleStart(PlannerError):
    """Interior-point solve started from a point that is not strictly feasible."""


class InfeasibleSubproblem(PlannerError):
    """A convex subproblem has an empty feasible set."""


class InfeasibleSensing(PlannerError):
    """The sensing MI requirement cannot be met with the available budget."""


class InfeasibleScenario(PlannerError):
    """No feasible initial state exists for the scenario."""


class SolverFailure(PlannerError):
    """A subproblem solver returned an unusable result."""
