"""Exception types. Each carries the CLI exit code it maps to."""

from __future__ import annotations


class PricingError(Exception):
    exit_code = 1


class ConfigurationError(PricingError, ValueError):
    """Invalid input: scenario section, unknown label, bad hyperparameter."""

    exit_code = 2

    def __init__(self, message: str, section: str | None = None, field: str | None = None):
        self.section = section
        self.field = field
        where = ".".join(p for p in (section, field) if p)
        super().__init__(f"{where}: {message}" if where else message)


class DomainError(ConfigurationError):
    """A multiplier formula left the positive half-line."""


class SamplingConflictError(PricingError):
    """Rejection sampling could not find an admissible draw.

    ``acceptance_estimate`` is the empirical acceptance rate over the
    attempts made; ``most_violated`` names the predicate that failed most.
    """

    exit_code = 3

    def __init__(self, message: str, acceptance_estimate: float = 0.0,
                 most_violated: str | None = None, attempts: int = 0):
        self.acceptance_estimate = acceptance_estimate
        self.most_violated = most_violated
        self.attempts = attempts
        super().__init__(message)


class SimulationError(PricingError):
    """A world produced a non-finite price."""

    exit_code = 3

    def __init__(self, message: str, world: int | None = None):
        self.world = world
        super().__init__(message)
