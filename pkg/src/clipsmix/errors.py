"""Exception hierarchy. Each class carries the CLI exit code it maps to."""


class ClipsError(Exception):
    exit_code = 1


class ConfigError(ClipsError, ValueError):
    """Malformed configuration, generator spec or option value."""

    exit_code = 2


class InvalidParameterError(ConfigError):
    """A distribution or algorithm received parameters outside its domain."""


class DataError(ClipsError, ValueError):
    """Observations do not match the shape or range the kernel expects."""

    exit_code = 3


class NumericalError(ClipsError, ArithmeticError):
    exit_code = 4


class NotPositiveDefiniteError(NumericalError):
    pass


class ContractViolation(ClipsError, RuntimeError):
    """An internal precondition was broken by the caller."""


class EmptyStratumError(ClipsError):
    """No recorded draw has the requested number of filled components."""

    exit_code = 4

    def __init__(self, k_hat, counts):
        self.k_hat = k_hat
        self.counts = dict(counts)
        alternatives = ", ".join(
            f"K+={k} ({n} draws)" for k, n in sorted(self.counts.items()))
        super().__init__(
            f"no draws with K+={k_hat}; available strata: {alternatives or 'none'}. "
            f"Re-run with --kplus set to one of these values.")
