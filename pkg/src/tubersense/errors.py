"""Exception hierarchy.

Everything derives from :class:`ToolkitError`; most also derive from
``ValueError`` so callers that only care about bad input can catch that.
"""


class ToolkitError(Exception):
    """Base class for all toolkit errors."""


class ParseError(ToolkitError, ValueError):
    """A file does not conform to its schema."""

    def __init__(self, message, *, path=None, line=None, field=None):
        self.path = path
        self.line = line
        self.field = field
        parts = [str(p) for p in (path, f"line {line}" if line is not None else None) if p is not None]
        if field is not None:
            parts.append(f"field '{field}'")
        super().__init__(f"{', '.join(parts)}: {message}" if parts else message)


class ValidationError(ToolkitError, ValueError):
    """A value violates a type invariant (NaN, negative spacing, ...)."""


class OutOfBoundsError(ValidationError):
    """A coordinate falls outside the declared grid extent."""


class DomainError(ToolkitError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class ConfigurationError(ToolkitError, ValueError):
    """A simulation or run configuration is physically inconsistent."""


class DegenerateSignalError(ToolkitError, ValueError):
    """A baseband block carries no usable signal (e.g. all zeros)."""


class AlignmentError(ToolkitError, ValueError):
    """Two objects that must share a grid or shape do not."""


class BandRangeError(ToolkitError, ValueError):
    """A requested band is not covered by the spectrum grid."""


class ParameterError(ToolkitError, ValueError):
    """An algorithm parameter (window size, bandwidth, ...) is invalid."""


class ZeroVarianceError(ToolkitError, ValueError):
    """A map or sample has zero variance and cannot be standardized."""


class DegenerateReferenceError(ZeroVarianceError):
    """A z-score reference set has zero spread."""


class NumericalError(ToolkitError, ArithmeticError):
    """Non-finite objective or gradient during optimization."""

    def __init__(self, message, iterate=None):
        self.iterate = iterate
        if iterate is not None:
            message = f"{message} (iterate={list(iterate)!r})"
        super().__init__(message)


class TrainingError(ToolkitError, ValueError):
    """A classifier cannot be trained on the given labels."""


class InsufficientReplicatesError(ToolkitError, ValueError):
    """Too few independent replicates for the requested statistic."""
