"""Exception hierarchy for the solver library."""


class CordesPinnError(Exception):
    """Base class for all library errors."""


class InvalidArchitectureError(CordesPinnError):
    """Network architecture violates a structural constraint (e.g. zero-width layer)."""


class PropagationError(CordesPinnError):
    """Non-finite or malformed data entered a derivative propagation."""


class InvalidHandleError(CordesPinnError):
    """A tape handle was used with a tape it does not belong to."""


class DegenerateCoefficientError(CordesPinnError):
    """Coefficient matrix is degenerate (zero trace norm) where a ratio is required."""


class RegistryError(CordesPinnError, KeyError):
    """Unknown problem name; carries the list of available names."""

    def __init__(self, name, available):
        self.name = name
        self.available = list(available)
        super().__init__(
            f"unknown problem {name!r}; available: {', '.join(self.available)}"
        )

    def __str__(self):
        return self.args[0]


class GeometryError(CordesPinnError):
    """Sampler could not produce points for the requested geometry."""


class TrainingDivergenceError(CordesPinnError):
    """Loss or gradient became non-finite during optimization."""

    def __init__(self, message, epoch=None, history=None):
        super().__init__(message)
        self.epoch = epoch
        self.history = history or []


class NonConvexityError(CordesPinnError):
    """Too many collocation points failed the Hessian convexity guard."""


class MassBalanceError(CordesPinnError):
    """Source and target densities carry different total mass."""


class ConfigError(CordesPinnError):
    """Run configuration file is malformed; message carries field context."""


class SingularSystemError(CordesPinnError):
    """Discrete finite-difference system lost ellipticity at the grid scale."""
