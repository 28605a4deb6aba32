"""Exception types shared across the package."""


class SidlabError(Exception):
    """Base class for all package errors."""


class ConfigError(SidlabError):
    """Malformed or inconsistent configuration input. Carries the offending key."""

    def __init__(self, key, message):
        self.key = key
        super().__init__(f"config key '{key}': {message}")


class ConvergenceError(SidlabError):
    """An iterative solve failed to reach its tolerance."""

    def __init__(self, message, residual=None):
        self.residual = residual
        super().__init__(message)


class HypothesisError(SidlabError):
    """A spectral hypothesis check failed; downstream results would be meaningless.

    Maps to CLI exit code 2.
    """


class OperatorError(SidlabError):
    """A discretized operator is unusable (singular solve, broken invariant)."""


class WorkerError(SidlabError):
    """A replication worker failed; `partial_results` says whether any chunk finished."""

    partial_results: bool = False
