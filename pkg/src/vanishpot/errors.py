"""Exception hierarchy.

The CLI maps these to exit codes: ``PreconditionError`` subclasses are
mathematical precondition failures (exit 2), ``NumericalFailure`` is an
internal numerical failure (exit 3).
"""


class VanishpotError(Exception):
    pass


class PolynomialSyntaxError(VanishpotError, ValueError):
    def __init__(self, message, text="", position=0):
        self.text = text
        self.position = position
        super().__init__(f"{message} at position {position}")


class PreconditionError(VanishpotError):
    pass


class UnstableBasisError(PreconditionError):
    pass


class NonIsolatedSingularityError(PreconditionError):
    pass


class DegreeOverflowError(PreconditionError):
    pass


class IrregularLevelSetError(PreconditionError):
    pass


class EmptyDomainError(PreconditionError):
    pass


class NumericalFailure(VanishpotError):
    pass


class DivergenceError(NumericalFailure):
    pass
