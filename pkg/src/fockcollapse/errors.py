"""Exception hierarchy shared by all modules."""


class FockCollapseError(Exception):
    """Base class for all engine errors."""


class RegistryError(FockCollapseError, KeyError):
    """Unknown species or mode, or an invalid registry declaration."""

    def __str__(self):
        return Exception.__str__(self)


class SectorIndexError(FockCollapseError, IndexError):
    """Requested sector or basis state is absent."""


class BoundaryError(FockCollapseError, ValueError):
    """Probe state too close to the truncation boundary."""


class DegenerateStateError(FockCollapseError, ValueError):
    """Operation needs a nonzero state."""


class ModelError(FockCollapseError, ValueError):
    """Ill-formed interaction model or non-Hermitian input."""


class CapacityError(FockCollapseError, RuntimeError):
    """Truncated basis larger than the configured dimension cap."""


class AccuracyError(FockCollapseError, RuntimeError):
    """Quadrature could not reach the requested tolerance."""


class ConvergenceError(FockCollapseError, RuntimeError):
    """S-matrix entries did not stabilise over the T schedule."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class InputError(FockCollapseError, ValueError):
    """Malformed numeric input (matrix shape, probability table, profile)."""


class ScenarioError(FockCollapseError, ValueError):
    """Measurement scenario violates its structural requirements."""


class ConfigError(FockCollapseError, ValueError):
    """Scenario configuration failed to parse or validate."""

    def __init__(self, message, line=None):
        super().__init__(message)
        self.line = line

    def __str__(self):
        msg = super().__str__()
        if self.line is not None:
            return f"line {self.line}: {msg}"
        return msg
