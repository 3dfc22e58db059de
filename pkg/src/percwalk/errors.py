class BudgetExceeded(RuntimeError):
    """An exploration hit its vertex budget before the answer was decided."""


class ConditioningError(RuntimeError):
    """Rejection sampling for an origin in the infinite-cluster proxy gave up."""


class MismatchError(ValueError):
    """A trajectory was paired with an environment or bias it did not come from."""
