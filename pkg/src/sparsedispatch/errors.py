"""Exception types shared across the package."""


class InputDomainError(ValueError):
    """Cycle features outside the domain of the degradation oracle."""


class ConfigurationError(ValueError):
    """Invalid sampling plan, training config or sweep request."""


class FeatureRangeError(ValueError):
    """A feature value falls outside its normalization range."""

    def __init__(self, feature, value, lo, hi):
        self.feature = feature
        self.value = value
        super().__init__(f"feature {feature!r}={value!r} outside normalization range [{lo!r}, {hi!r}]")


class StructuralError(ValueError):
    """Array shapes do not match the 5-20-10-1 architecture."""


class DivergenceError(RuntimeError):
    """Training produced a non-finite loss."""

    def __init__(self, epoch, loss):
        self.epoch = epoch
        super().__init__(f"non-finite loss {loss!r} at epoch {epoch}")


class NetParseError(ValueError):
    """A network file could not be parsed."""

    def __init__(self, message, line=None, field=None):
        self.line = line
        self.field = field
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field {field!r}")
        super().__init__(f"{message} ({', '.join(where)})" if where else message)


class EncodingError(ValueError):
    """A network cannot be compiled into MILP constraints."""


class EmissionError(ValueError):
    """A model cannot be written as LP/MPS text."""


class CaseError(ValueError):
    """Malformed or inconsistent case data."""


class CouplingError(ValueError):
    """Scheduling feature ranges are not covered by the network normalization."""


class ExtractionError(KeyError):
    """A solution lacks a variable the schedule needs."""


class SolverNotFoundError(RuntimeError):
    """The configured solver executable is not available."""


class AdapterError(RuntimeError):
    """The solver ran but its output could not be understood."""

    def __init__(self, message, output=""):
        self.output = output
        super().__init__(f"{message}\n{output}" if output else message)


class ConsistencyError(RuntimeError):
    """A fixed-binary re-solve disagrees with the MILP solution it came from."""
