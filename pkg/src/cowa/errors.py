"""Exception types shared across the package."""


class CowaError(Exception):
    """Base class for package errors."""


class FormatError(CowaError):
    """Malformed input file (bad header, wrong column count, unparseable value)."""


class ValidationError(CowaError):
    """Input violates a documented precondition or invariant."""


class NumericalError(CowaError):
    """A numerical routine failed (e.g. Cholesky on a non-SPD matrix)."""


class DegenerateComponentError(CowaError):
    """A mixture component received (near-)zero responsibility mass.

    Carries the offending class indices so callers can drop them.
    """

    def __init__(self, classes):
        self.classes = list(classes)
        super().__init__(f"degenerate mixture component(s) for class(es) {self.classes}")
