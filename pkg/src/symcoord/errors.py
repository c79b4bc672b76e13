"""Exception types shared across the package."""


class SymcoordError(Exception):
    """Base class for all errors raised by this package."""


class ConfigurationError(SymcoordError):
    """A requested method/model/option combination is invalid."""


class DerivativeEvaluationError(SymcoordError):
    """A finite-difference probe hit a non-finite function value.

    Attributes:
        index: component index of the probe that failed, or None.
    """

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class SamplingError(SymcoordError):
    """Seeded state sampling could not avoid a declared singular locus."""


class ImplicitSolveError(SymcoordError):
    """Fixed-point iteration for an implicit update did not converge.

    Attributes:
        residual: last iterate-to-iterate residual (inf norm).
    """

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class SingularTransformError(SymcoordError):
    """A transform Jacobian is singular or numerically unusable.

    Attributes:
        cond: condition-number estimate at the offending point, or None.
    """

    def __init__(self, message, cond=None):
        super().__init__(message)
        self.cond = cond


class DomainError(SymcoordError):
    """A point lies outside the validity region of a transform or model."""


class PoleError(SymcoordError):
    """The integrand of a compensating transform has a pole in range."""


class CapabilityError(SymcoordError):
    """An operation needs derivative data the object does not provide."""


class PreconditionError(SymcoordError):
    """A documented precondition fails (e.g. a coordinate is not cyclic)."""


class OraclePrecisionError(SymcoordError):
    """The reference integrator could not reach its target accuracy."""


class ExperimentError(SymcoordError):
    """An experiment could not produce a meaningful result."""


class NumericError(SymcoordError):
    """Unexpected non-finite values inside a numerical routine."""
