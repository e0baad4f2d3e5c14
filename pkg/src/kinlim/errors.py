"""Exception types raised by the kinlim modules."""


class KinlimError(Exception):
    """Base class for all kinlim errors."""


class InvalidParameterError(KinlimError, ValueError):
    """An argument is outside its documented domain."""


class InvalidInputError(KinlimError, ValueError):
    """An input object fails a precondition (empty ensemble, too few replicas, ...)."""


class UnsupportedRegimeError(KinlimError):
    """Operation requested for a scaling regime it is not defined in."""


class InconsistentStateError(KinlimError):
    """Simulation state violates an invariant beyond tolerance (e.g. overlapping spheres)."""


class RunawayCollisionsError(KinlimError):
    """Event-driven run exceeded its event budget (suspected numerical Zeno)."""


class SamplingFailureError(KinlimError):
    """Rejection sampler ran out of attempts; carries diagnostics in args."""


class ConfigurationError(KinlimError):
    """Invalid numerical configuration (cell size, time step bound, ...)."""


class BlowUpError(KinlimError):
    """NaN/Inf detected during time integration; message carries step diagnostics."""


class SingularRelativeVelocityError(KinlimError):
    """|U| at or below the regularization floor; caller decides how to regularize."""


class CaptureError(KinlimError):
    """Two-body scattering did not exit the interaction ball within the time budget."""


class UnreliableEstimateError(KinlimError):
    """Monte Carlo estimate rejected (e.g. capture rate above threshold)."""


class AccuracyError(KinlimError):
    """Quadrature failed to converge to the requested tolerance."""


class StabilityError(KinlimError):
    """Explicit time step violated its stability bound (or clamping exceeded budget)."""


class DegenerateFitError(KinlimError):
    """Moment fit is degenerate (zero variance)."""


class SchemaMismatchError(KinlimError):
    """Two CSV series do not share a schema; args list the differing columns."""
