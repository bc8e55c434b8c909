"""Exception types raised across the package."""


class BZError(Exception):
    """Base class for all package errors."""


class ConfigurationError(BZError, ValueError):
    """Invalid parameters, configs or geometry requests."""


class DomainError(BZError, ValueError):
    """Non-finite inputs handed to the reaction terms."""


class NumericError(BZError, RuntimeError):
    """Root finding or another numeric procedure did not converge."""


class SolverBlowUpError(BZError, RuntimeError):
    """A field became non-finite during time stepping.

    Attributes:
        cell: flat index of the first offending cell (marble-local when raised
            from a single-marble step, global otherwise).
        marble: marble id, when known.
        time: dimensionless time at which the blow-up was detected.
    """

    def __init__(self, message, cell=None, marble=None, time=None):
        super().__init__(message)
        self.cell = cell
        self.marble = marble
        self.time = time


class GeometryError(BZError, ValueError):
    """Contact geometry is inconsistent (e.g. an edge with an empty contact zone)."""


class PackingError(BZError, RuntimeError):
    """Disordered placement ran out of attempts.

    Attributes:
        achieved: number of marbles placed before giving up.
    """

    def __init__(self, message, achieved):
        super().__init__(message)
        self.achieved = achieved


class OutputError(BZError, OSError):
    """An output file or directory could not be written."""
