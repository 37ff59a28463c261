"""Error types shared across the package."""


class SpikefieldError(Exception):
    """Base class for all package errors."""


class NonPositiveValue(SpikefieldError, ValueError):
    """A parameter that must be strictly positive (or a valid count) is not."""


class RangeTooLarge(SpikefieldError, ValueError):
    """A requested count exceeds what the population admits."""


class AllSilent(SpikefieldError, ValueError):
    """Categorical selection over potentials with zero total mass."""


class OutOfDomain(SpikefieldError, ValueError):
    """A time or argument falls outside a curve's domain."""


class EmptyDistribution(SpikefieldError, ValueError):
    """An empirical sample set is empty."""


class EmptyReference(SpikefieldError, ValueError):
    """A reference table has no rows or empty rows."""


class TooFewSamples(SpikefieldError, ValueError):
    """Not enough samples for the requested statistic."""


class NoConvergence(SpikefieldError, RuntimeError):
    """Iterative solver failed to reach its tolerance."""

    def __init__(self, message, residual=None, iterations=None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class UnknownScenario(SpikefieldError, KeyError):
    """Scenario name not present in the registry."""


class ConfigError(SpikefieldError, ValueError):
    """Invalid experiment configuration; carries per-field messages."""

    def __init__(self, problems):
        if isinstance(problems, str):
            problems = [problems]
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))
