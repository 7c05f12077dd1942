"""Exception hierarchy for the package."""


class ProfileError(Exception):
    """Base class for all errors raised by blowup_profiles."""


class DomainError(ProfileError, ValueError):
    """Exponents (m, p, sigma) outside the admissible range."""


class ChartError(ProfileError, ValueError):
    """State has a negative coordinate where the chart requires >= 0."""


class SingularMapError(ProfileError, ValueError):
    """Chart transform requested at a boundary point (x=0, z=0, X=0 or Z=0)."""


class UnsupportedPoint(ProfileError):
    """No linearization is used for this critical point (Q4)."""


class BadFamilyParam(ProfileError, ValueError):
    """Family parameter (k for P0, eta for the interface line) must be > 0."""


class BadDelta(ProfileError, ValueError):
    """Starter offset outside (0, 1e-3]."""


class OutOfValidity(ProfileError, ValueError):
    """Asymptotic formula evaluated outside its declared validity window."""


class StepSizeUnderflow(ProfileError):
    """Adaptive step size collapsed below the floor."""

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace


class NoSuchEvent(ProfileError, LookupError):
    """No sign change of the requested indicator along the trace."""


class BracketError(ProfileError, ValueError):
    """Bracket endpoints do not have the required classes."""


class AmbiguousLimit(ProfileError):
    """Bisection converged but neither good-profile class could be certified."""

    def __init__(self, message, lo=None, hi=None):
        super().__init__(message)
        self.lo = lo
        self.hi = hi


class CertificationFailure(ProfileError):
    """Bisection midpoint resolved to neither side of the dichotomy."""

    def __init__(self, message, lo=None, hi=None):
        super().__init__(message)
        self.lo = lo
        self.hi = hi


class TrapViolation(ProfileError):
    """A trajectory left a region proven to be positively invariant."""
