"""Error types shared across the simulator.

Undefined measures are deliberately an exception (or an explicit ``None``
where the contract says "no-data is a value"), never a silent 0.0, so that
aggregations cannot absorb degenerate inputs.
"""


class CwbsimError(Exception):
    """Base class for all errors raised by this package."""


class InvalidConfigError(CwbsimError):
    """A configuration value is out of range, unknown, or inconsistent."""


class InvalidInputError(CwbsimError):
    """A runtime input violates an operation's preconditions (e.g. non-finite)."""


class NotFoundError(CwbsimError):
    """A referenced entity (user id, aspect) does not exist."""


class UndefinedMeasureError(CwbsimError):
    """A measure has no defined value on this input (e.g. isolated node)."""
