class Rejection(ValueError):
    """Raised when an input violates an operation's precondition.

    The message names the failing condition so that callers (and the batch
    runner) can report it verbatim.
    """
