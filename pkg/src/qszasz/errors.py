"""Exception hierarchy shared by every module of the package."""


class QSzaszError(Exception):
    """Base class for all errors raised by qszasz."""


class ParameterError(QSzaszError, ValueError):
    """Invalid operator parameters (q <= 1, n < 1, negative x, ...)."""


class DomainError(QSzaszError, ValueError):
    """Argument outside the convergence domain of a series."""


class SeriesExhaustedError(QSzaszError, ArithmeticError):
    """A series or product did not converge within ``max_terms``."""

    def __init__(self, what, terms, detail=""):
        self.what = what
        self.terms = terms
        msg = f"{what}: no convergence within {terms} terms"
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)


class NonFiniteValueError(QSzaszError, ArithmeticError):
    """A user function returned inf/nan where a finite value is required."""

    def __init__(self, where, value):
        self.where = where
        self.value = value
        super().__init__(f"non-finite value {value!r} at {where}")


class QIntegerOverflowWarning(RuntimeWarning):
    """[m]_q exceeds the double range and was returned as +inf."""
