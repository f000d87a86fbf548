"""Exception hierarchy shared by all modules."""


class KGraphError(Exception):
    """Base class for every error raised by the package."""


class DomainError(KGraphError):
    """A point lies outside the coordinate chart."""


class ContractError(KGraphError):
    """An argument violates a documented precondition."""


class InputError(KGraphError):
    """Malformed user input (boundary, tables, sampling sizes)."""


class GeometryError(KGraphError):
    """Degenerate geometric data."""


class ResolutionError(KGraphError):
    """The grid is too coarse for the requested domain."""


class CutLocusError(KGraphError):
    """Evaluation requested where the distance function is not smooth."""


class NumericError(KGraphError):
    """Non-finite or overflowing quantities."""


class SolverError(KGraphError):
    """Linear algebra failure inside the nonlinear solver."""


class PreconditionError(KGraphError):
    """A probe was called on data that violates its hypotheses."""


class ConfigError(KGraphError):
    """Invalid run configuration."""
