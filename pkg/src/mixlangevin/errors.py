"""Exception types shared across the package."""


class MixLangevinError(Exception):
    """Base class for every error raised by this package."""


class ConfigurationError(MixLangevinError, ValueError):
    """Invalid or missing configuration (metadata, config keys, parameters).

    ``field`` names the offending config path when one is known.
    """

    def __init__(self, message, field=None):
        if field is not None:
            message = f"{field}: {message}"
        super().__init__(message)
        self.field = field


class DimensionError(MixLangevinError, ValueError):
    """A point or array does not match the declared dimension."""


class CapabilityError(MixLangevinError):
    """The requested operation needs a capability the object lacks."""


class DivergedChainError(MixLangevinError):
    """A Langevin chain produced a non-finite or runaway iterate.

    Carries the 1-based step index at which the guard fired and, when
    available, the partial trajectory recorded up to that point.
    """

    def __init__(self, step, message=None, trajectory=None, chain=0):
        self.step = int(step)
        self.chain = int(chain)
        self.trajectory = trajectory
        super().__init__(message or f"chain {chain} diverged at step {step}")


class InsufficientDataError(MixLangevinError, ValueError):
    """Too few samples for the requested estimator."""


class ReferenceBoundsError(MixLangevinError, ValueError):
    """Grid bounds leave too much target mass outside the grid."""

    def __init__(self, message, tail_mass, suggested_bounds):
        super().__init__(message)
        self.tail_mass = tail_mass
        self.suggested_bounds = suggested_bounds
