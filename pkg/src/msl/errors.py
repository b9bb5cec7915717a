"""Exception hierarchy shared by all modules."""


class MSLError(Exception):
    """Base class for library errors."""


class ValidationError(MSLError, ValueError):
    """Input violates a structural requirement (Hermitian symmetry, shapes)."""


class DimensionError(ValidationError):
    """Matrix sizes of two inputs do not match."""


class IntegrationDivergenceError(MSLError, ArithmeticError):
    """Non-finite values appeared while integrating the ODE."""


class ResolutionError(MSLError):
    """The grid is too coarse for the requested spectral parameter."""


class NearPoleError(MSLError):
    """A spectral parameter sits too close to an eigenvalue."""

    def __init__(self, lam, pole=None, message=None):
        self.lam = lam
        self.pole = pole
        if message is None:
            message = f"lambda={lam!r} is too close to the eigenvalue {pole!r}"
        super().__init__(message)


class LocalizationError(MSLError):
    """Eigenvalue count does not match the expected total."""

    def __init__(self, message, interval=None, found=None, expected=None):
        self.interval = interval
        self.found = found
        self.expected = expected
        super().__init__(message)


class GapError(MSLError):
    """Contour quadrature did not converge (a pole is close to the contour)."""


class IllConditionedError(MSLError):
    """The truncated main equation is numerically singular."""

    def __init__(self, message, x=None, condition=None):
        self.x = x
        self.condition = condition
        super().__init__(message)


class SchemaError(MSLError, ValueError):
    """A JSON document does not follow the expected layout."""

    def __init__(self, message, path="$"):
        self.path = path
        super().__init__(f"{path}: {message}")
