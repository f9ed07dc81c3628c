"""Exception hierarchy shared by all modules."""


class NcstabError(Exception):
    """Base class for library errors."""

    exit_code = 4


class DimensionError(NcstabError, ValueError):
    pass


class DomainError(NcstabError, ValueError):
    pass


class ConvergenceError(NcstabError, RuntimeError):
    pass


class SingularityError(NcstabError, ArithmeticError):
    pass


class StabilityError(NcstabError, ValueError):
    pass


class StructuralError(NcstabError, ValueError):
    """Realization is not stabilizable or not detectable."""


class FactorizationError(NcstabError, ValueError):
    pass


class NotASpectrumError(NcstabError, ValueError):
    pass


class WNotInvertibleError(NcstabError, ValueError):
    """The nominal channel FIR has a zero on or outside the unit circle.

    The offending root is kept in ``root``.
    """

    def __init__(self, message, root=None):
        super().__init__(message)
        self.root = root


class ScopeError(NcstabError, ValueError):
    exit_code = 3


class SchemaError(NcstabError, ValueError):
    exit_code = 2
