"""Exception types raised across the package."""


class PohmmError(Exception):
    """Base class for all package errors."""


class CycleError(PohmmError):
    """A relation that should be a partial order contains a directed cycle."""


class UnknownActor(PohmmError, KeyError):
    """An actor id is not part of the ground set being addressed."""


class SizeLimit(PohmmError):
    """Exact counting was requested on a ground set above the configured size."""


class DomainError(PohmmError, ValueError):
    """A parameter lies outside its admissible range."""


class GroundMismatch(PohmmError, ValueError):
    """A rank list does not cover exactly the ground set of an order."""


class MissingCovariate(PohmmError, KeyError):
    pass


class MissingAuthority(PohmmError, KeyError):
    pass


class ParseError(PohmmError, ValueError):
    pass


class DuplicateId(PohmmError, ValueError):
    pass


class InvalidInterval(PohmmError, ValueError):
    pass


class EmptyDataset(PohmmError, ValueError):
    pass


class InactiveActor(PohmmError, ValueError):
    pass


class ZeroPriorMass(PohmmError, ZeroDivisionError):
    """The prior probability of a structural class was estimated as zero."""


class InsufficientData(PohmmError, ValueError):
    pass


class DegenerateTrace(PohmmError, ValueError):
    pass


class CoherenceError(PohmmError, AssertionError):
    """Cached sampler quantities disagree with a full recomputation."""
