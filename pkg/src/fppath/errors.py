"""Exception types shared across the package."""


class ValidationError(ValueError):
    """Input violates a structural requirement (graph shape, sets, data).

    When raised from :func:`fppath.graph.validate_assumption_1` the failing
    report is attached as ``report``.
    """

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class SolverError(RuntimeError):
    """A linear solve failed or left a residual above tolerance."""


class ConsistencyError(RuntimeError):
    """Two routes to the same quantity disagree beyond tolerance."""


class SimulationError(RuntimeError):
    """Monte Carlo sampling could not produce a usable sample."""
