"""Exception types shared across the package."""


class ZonempcError(Exception):
    """Base class for all package errors."""


class ConfigError(ZonempcError):
    """Invalid configuration value; message carries the field path."""


class UsageError(ZonempcError):
    """Bad command-line invocation."""


# --- time series ingestion ---

class SchemaMismatch(ZonempcError):
    """CSV header does not match the expected channel schema."""


class NonMonotonicTime(ZonempcError):
    """Timestamps are not strictly increasing on a fixed grid."""


class GapTooLarge(ZonempcError):
    """More consecutive samples missing than the interpolation limit allows."""


class ValueOutOfRange(ZonempcError):
    """Channel value violates its unit's admissible range."""


class NonIntegerRatio(ZonempcError):
    """Resampling step is not an integer multiple of the source step."""


class NotEnoughData(ZonempcError):
    """Series too short for the requested split or fit."""


class MissingChannel(ZonempcError):
    """A required named channel is absent."""


class TooShort(ZonempcError):
    """Series shorter than the lag structure requires."""


class MissingSupplyTemperature(ZonempcError):
    """Actuator encoding needs a supply-temperature channel that is missing."""


# --- solvers and models ---

class MaxIterationsExceeded(ZonempcError):
    """Active-set iteration cap reached before convergence."""


class FeatureDimensionMismatch(ZonempcError):
    """Feature vector length does not match the fitted model."""


class DimensionMismatch(ZonempcError):
    """Network input dimensions do not match the architecture."""


class Diverged(ZonempcError):
    """Training loss became NaN or infinite."""


class ForecastTooShort(ZonempcError):
    """Disturbance forecast does not cover the optimization horizon."""


class MaxIterations(ZonempcError):
    """Iterative QP solver hit its iteration cap."""


class NonConvexCost(ZonempcError):
    """Quadratic cost matrix failed the positive-semidefinite check."""


class LowerBoundRequested(ZonempcError):
    """Lower output bounds requested for a network MPC problem without the
    explicit non-convex override."""


class UnstableStep(ZonempcError):
    """Simulated temperature left the sanity band."""


class SingularDesign(ZonempcError):
    """Regression design matrix is rank deficient."""
