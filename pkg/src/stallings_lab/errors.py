"""Exception types shared across the package.

The CLI maps them to exit codes: precondition problems exit with 2,
resource caps with 3 and theorem-violation signals with 1.
"""


class LabError(Exception):
    exit_code = 1


class PreconditionError(LabError, ValueError):
    exit_code = 2


class CapExceeded(LabError, RuntimeError):
    exit_code = 3


class TheoremViolation(LabError, AssertionError):
    """An inequality that must hold on every valid input failed."""

    exit_code = 1
