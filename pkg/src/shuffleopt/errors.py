"""Exception types shared across the library."""


class InvalidInputError(ValueError):
    """An argument violates an operation's contract."""


class SizeLimitError(ValueError):
    """An enumeration request exceeds the supported problem size."""


class NumericOverflowError(ArithmeticError):
    """An evaluation produced non-finite values."""


class DivergenceError(RuntimeError):
    """An optimizer iterate became non-finite.

    Carries the epoch and inner-step index at which the blow-up occurred.
    """

    def __init__(self, epoch: int, inner: int):
        super().__init__(f"non-finite iterate at epoch {epoch}, inner step {inner}")
        self.epoch = epoch
        self.inner = inner


class ScheduleGuardError(ValueError):
    """A strict guard rejected a step size above the admissible cap."""


class AuditUnavailableError(RuntimeError):
    """An audit needs measurements the run did not record."""


class ConfigError(ValueError):
    """Malformed or inconsistent experiment configuration."""


class AuditFailure(RuntimeError):
    """An asserted audit contract was violated."""

    def __init__(self, check: str, epoch: int | None, residual: float | None):
        where = "" if epoch is None else f" at epoch {epoch}"
        value = "" if residual is None else f" (residual {residual:.6g})"
        super().__init__(f"audit '{check}' failed{where}{value}")
        self.check = check
        self.epoch = epoch
        self.residual = residual
