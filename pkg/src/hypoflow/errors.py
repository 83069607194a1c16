"""Exception types shared across the package."""


class HypoflowError(Exception):
    """Base class for all errors raised by hypoflow."""


class ConfigError(HypoflowError):
    """Scenario file is malformed, has unknown keys, or inconsistent values."""


class DimensionMismatch(HypoflowError):
    """Fields or operators defined on different grids were combined."""


class DegenerateWeight(HypoflowError):
    """A weight fell below the positivity floor where the field is nonzero."""


class CflViolation(HypoflowError):
    """Requested time step exceeds the advective stability limit."""


class NoConvergence(HypoflowError):
    """An iterative solver hit its iteration cap before reaching tolerance."""


class NegativeState(HypoflowError):
    """Computed steady state is not sign-definite beyond tolerance."""


class DegenerateState(HypoflowError):
    """Steady state has no usable mass on the unit velocity ball."""


class SpectralFailure(HypoflowError):
    """An eigenvalue solve failed or returned an inconsistent spectrum."""


class SingularMoment(HypoflowError):
    """Velocity moment matrix is numerically singular on this grid."""


class ZeroDissipation(HypoflowError):
    """Dissipation integral vanishes; bound ratios are undefined."""


class CertificateVacuous(HypoflowError):
    """Assembled certificate constant fails its own direct check."""


class CompatibilityViolation(HypoflowError):
    """Right-hand side violates the zero-mean solvability condition."""


class PatchSingular(HypoflowError):
    """A partition patch is too small for a well-posed local solve."""


class BisectionFailure(HypoflowError):
    """Scalar root bracketing failed in the decay recursion."""


class InsufficientData(HypoflowError):
    """Not enough samples to fit a decay rate."""
