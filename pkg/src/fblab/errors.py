"""Exception hierarchy shared by all fblab modules."""


class FBLabError(Exception):
    """Base class for all fblab errors."""


class RejectedInput(FBLabError):
    """Input violates a documented precondition or invariant."""


class DomainOverflow(FBLabError):
    """A requested sample, ball or image point leaves the field's domain."""


class NumericalFailure(FBLabError):
    """An iteration failed to converge or produced non-finite values."""
