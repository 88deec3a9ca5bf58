"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: InputError -> 1, everything else
derived from BcrfError -> 2 (internal invariant failure).
"""


class BcrfError(Exception):
    """Base class for all package errors."""


class InputError(BcrfError):
    """Malformed or out-of-contract input supplied by the caller."""


class SizeGuardError(InputError):
    """Instance exceeds a hard size cap (exact enumeration, pixel budget)."""


class InvariantError(BcrfError):
    """An internal invariant failed to hold; indicates a bug, not bad input."""


class FitDivergedError(BcrfError):
    """Parameter fitting produced a non-finite loss.

    Carries the loss trace accumulated up to the failing step.
    """

    def __init__(self, message, loss_trace):
        super().__init__(message)
        self.loss_trace = list(loss_trace)
