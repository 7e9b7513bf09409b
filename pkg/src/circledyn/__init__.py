"""Computational toolkit for groups of circle and interval diffeomorphisms."""

from .errors import (
    CircleDynError, InvalidMapError, PreconditionError, DomainError,
    ConvergenceError, CapabilityError, ResourceError,
)
from .maps import CircleMap, LineMap

__version__ = "0.1.0"
