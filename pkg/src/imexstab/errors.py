"""Exception types shared across the package."""


class NumericFailure(RuntimeError):
    """A linear solve, eigensolve or function evaluation broke down.

    ``context`` carries whatever the raising site knows (dt, column index, ...).
    """

    def __init__(self, message, **context):
        super().__init__(message)
        self.context = context


class StepFailure(RuntimeError):
    """The adaptive controller exhausted its reject budget on one step."""

    def __init__(self, message, records=None):
        super().__init__(message)
        self.records = list(records or [])
