"""Exception hierarchy shared across the package."""


class EtasError(Exception):
    """Base class for all package errors."""


class DomainError(EtasError, ValueError):
    """An argument lies outside the domain where the operation is defined."""


class InvalidParameterError(EtasError, ValueError):
    """A model parameter violates its constraints."""


class CatalogParseError(EtasError, ValueError):
    """A catalog file could not be parsed."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class EmptyCatalogError(EtasError, ValueError):
    """A catalog file or catalog has no events where some are required."""


class ConfigError(EtasError, ValueError):
    """Invalid run or model configuration."""


class DegenerateIntensityError(EtasError, ArithmeticError):
    """The conditional intensity vanished at an observed event."""


class NonFiniteLikelihoodError(EtasError, ArithmeticError):
    """The log-likelihood evaluated to a non-finite value."""


class NumericalError(EtasError, ArithmeticError):
    """A matrix factorization or similar numerical step failed.

    ``state`` optionally carries a serializable snapshot for debugging.
    """

    def __init__(self, message, state=None):
        super().__init__(message)
        self.state = state


class SamplerFailure(EtasError, RuntimeError):
    """A rejection sampler exceeded its iteration budget."""


class SupercriticalError(EtasError, RuntimeError):
    """A branching simulation grew beyond the event budget."""


class FitError(EtasError, RuntimeError):
    """Maximum-likelihood fitting failed."""

    def __init__(self, message, params=None):
        super().__init__(message)
        self.params = params


class GibbsError(EtasError, RuntimeError):
    """A Gibbs sweep failed; carries the iteration index and state."""

    def __init__(self, message, iteration=None, state=None):
        super().__init__(message)
        self.iteration = iteration
        self.state = state
