"""Exception hierarchy shared by all modules."""


class HMLError(Exception):
    """Base class for every error raised by this package."""


class InvalidParameterError(HMLError, ValueError):
    pass


class NonPositiveCError(HMLError, ValueError):
    """The constant frak C is not positive, so no periodic profile exists."""


class ComplexRootsError(HMLError):
    pass


class MultipleRootError(HMLError):
    pass


class DegenerateRootError(HMLError):
    """A cubic root coincides with c1, which makes beta = c2*alpha/(alpha - c1) singular."""


class NegativeRadicandError(HMLError):
    def __init__(self, index, value):
        self.index = index
        self.value = value
        super().__init__(
            f"gamma_{index} radicand is negative ({value!r}); no real immersion of this form")


class IdentityViolationError(HMLError):
    def __init__(self, name, residual, tol):
        self.name = name
        self.residual = residual
        self.tol = tol
        super().__init__(f"identity {name} violated: residual {residual:.3e} > {tol:.1e}")


class NoOscillationError(HMLError, ValueError):
    pass


class QuadratureNonConvergence(HMLError):
    pass


class ZeroVectorError(HMLError, ValueError):
    pass


class UnclosedTorusWarning(UserWarning):
    """Sampling periods are provisional because the torus does not close."""
