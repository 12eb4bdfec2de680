"""Exception and warning types shared across the package."""


class TruncationError(ValueError):
    """Raised when a state or operator does not fit in the retained Fock space."""


class TruncationWarning(UserWarning):
    """Population is approaching the top of the retained Fock space."""


class IonLostError(RuntimeError):
    """The integrated ion trajectory left the trap region."""


class IllConditionedError(ValueError):
    """A least-squares design matrix is too close to singular to trust.

    ``condition_number`` is the 2-norm condition number that tripped the check.
    """

    def __init__(self, message, condition_number=None):
        super().__init__(message)
        self.condition_number = condition_number


class PreconditionError(ValueError):
    """An input state violates the precondition of a protocol step.

    ``residual`` carries the offending population so callers can report it.
    """

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual
