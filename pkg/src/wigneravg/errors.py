"""Exception and warning types raised across the toolkit."""


class InvalidParameterError(ValueError):
    pass


class ResolutionError(ValueError):
    """A field or profile is not resolved by the grid it lives on."""


class InvalidStateError(ValueError):
    pass


class InconsistencyError(RuntimeError):
    """Two routes to the same discrete quantity disagree."""


class StabilityError(ValueError):
    """Time step too coarse for the phases it has to resolve."""

    def __init__(self, message, suggested_dt=None):
        super().__init__(message)
        self.suggested_dt = suggested_dt


class HypothesisViolationError(ValueError):
    pass


class MetadataError(ValueError):
    """Declared metadata (e.g. a Lipschitz constant) contradicts the samples."""


class DecompositionError(ValueError):
    pass


class InvalidSweepError(ValueError):
    pass


class VacuumError(RuntimeError):
    def __init__(self, message, time=None):
        super().__init__(message)
        self.time = time


class BlowUpError(RuntimeError):
    def __init__(self, message, time=None):
        super().__init__(message)
        self.time = time


class ExpressionError(ValueError):
    def __init__(self, message, column):
        super().__init__(f"{message} (column {column})")
        self.column = column


class ConfigError(ValueError):
    def __init__(self, diagnostics):
        self.diagnostics = list(diagnostics)
        super().__init__("; ".join(str(d) for d in self.diagnostics))


class BoundaryDecayWarning(UserWarning):
    pass


class IdentityInapplicableWarning(UserWarning):
    pass


class ResolutionWarning(UserWarning):
    pass
