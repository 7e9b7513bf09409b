"""Exception hierarchy.

Every error carries an ``exit_code`` so the command line front end can map
failures to process status without a lookup table.
"""


class CircleDynError(Exception):
    exit_code = 1


class PreconditionError(CircleDynError):
    exit_code = 2


class InvalidMapError(PreconditionError):
    """Lift is not monotone or does not commute with unit translation."""


class DomainError(PreconditionError):
    """Input lies outside the domain where the operation makes sense."""


class CapabilityError(PreconditionError):
    """The map lacks something the operation needs (e.g. a derivative)."""


class ResourceError(PreconditionError):
    pass


class ConvergenceError(CircleDynError):
    exit_code = 3

    def __init__(self, msg, report=None):
        super().__init__(msg)
        self.report = report or {}
