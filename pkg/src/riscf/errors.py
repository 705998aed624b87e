"""Exception types shared across the package."""


class RiscfError(Exception):
    """Base class for all package-specific failures."""


class ParameterError(RiscfError, ValueError):
    """A parameter or configuration value is out of its legal range."""


class SolverError(RiscfError, RuntimeError):
    """A numerical subproblem could not be solved to the requested quality."""


class InvariantError(RiscfError, RuntimeError):
    """An experiment-level sanity assertion failed."""
