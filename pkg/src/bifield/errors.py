"""Exception types shared across the package.

Numeric failures are deliberately loud: field evaluation inside an exclusion
ball, a scalar invariant leaving its model domain, or a solver that cannot
bracket its root all raise instead of clamping, so that a bad configuration
cannot silently produce plausible-looking numbers.
"""


class FieldError(Exception):
    """Base class for all numeric/domain failures raised by this package."""


class SingularPoint(FieldError):
    """Evaluation point inside the exclusion ball of a point charge."""


class DomainViolation(FieldError):
    """Lorentz invariant s (or a derived scalar) left the model's domain."""


class NegativeArgument(FieldError):
    """Special function called outside its real branch (e.g. Lambert W of x < 0)."""


class NoNonnegativeRoot(FieldError):
    """Cubic solver found no root a >= 0; cannot occur for sigma2 >= 0."""


class BracketFailure(FieldError):
    """Monotone inversion could not enclose the target value."""


class InversionFailure(FieldError):
    """Constitutive inversion failed to produce a valid (E, H) pair."""


class QuadratureError(FieldError):
    """Adaptive quadrature failed to reach its tolerance within budget."""


class ConfigError(Exception):
    """Malformed run configuration (CLI exit code 1)."""
