"""Exception hierarchy shared by all modules."""


class Bb84FlawsError(Exception):
    """Base class for every error raised by this package."""


class DomainError(Bb84FlawsError, ValueError):
    """An argument lies outside the domain of the operation."""


class NumericalFailure(Bb84FlawsError, ArithmeticError):
    """A numerical routine failed to converge or lost too much precision."""


class InvalidBoundError(Bb84FlawsError):
    """A decoy or finite-key bound cannot be evaluated soundly.

    Raised instead of returning a number whenever a precondition of the
    underlying derivation is violated (failed photon-number condition,
    non-positive denominator, vanishing single-photon counts, ...).
    """


class InvariantViolation(Bb84FlawsError):
    """A density matrix or probability object broke one of its invariants."""


class ConfigError(Bb84FlawsError):
    """The scenario configuration is malformed or incomplete.

    Attributes:
        key: dotted name of the offending configuration key, if known.
    """

    def __init__(self, message, key=None):
        super().__init__(message)
        self.key = key


class IngestError(Bb84FlawsError):
    """A data file could not be parsed.

    Attributes:
        path: offending file, if known.
        line: 1-based line number, if known.
    """

    def __init__(self, message, path=None, line=None):
        location = ""
        if path is not None:
            location = f"{path}"
            if line is not None:
                location += f":{line}"
            location += ": "
        super().__init__(location + message)
        self.path = path
        self.line = line


class InsufficientDataError(IngestError):
    """Too few samples for the requested statistic."""


class DegenerateFitError(IngestError):
    """Samples have zero spread, so no Gaussian can be fitted."""
