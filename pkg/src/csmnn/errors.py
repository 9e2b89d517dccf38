"""Exception hierarchy shared by all csmnn modules."""


class CsmError(Exception):
    """Base class for every error raised by csmnn."""


class ConfigError(CsmError):
    """Unknown technology, corner, resolution or otherwise invalid setup."""


class NumericInputError(CsmError, ValueError):
    """Non-finite or otherwise unusable numeric input."""


class SchemaError(CsmError, KeyError):
    """A CSM component was requested that the cell schema does not define."""


class SizeError(CsmError, ValueError):
    """Requested sample size is outside the dataset bounds."""


class BuildError(CsmError):
    """A LUT could not be built from a dataset (incomplete grid)."""


class QueryError(CsmError, ValueError):
    """Evaluator queried with a vector of the wrong dimension."""


class TransformError(CsmError, ValueError):
    """Targets fall outside the domain of the output transform."""


class ParseError(CsmError):
    """Malformed circuit or stimulus text."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class SimulationError(CsmError):
    """Transient integration failed (instability or Newton non-convergence)."""


class MetricError(CsmError, ValueError):
    """Waveforms cannot be compared (mismatched sampling, no crossing)."""
