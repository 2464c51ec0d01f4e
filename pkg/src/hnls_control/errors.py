"""Exception types and the CLI exit codes they map to."""


class HNLSError(Exception):
    """Base class; ``exit_code`` is used by the command-line runner."""

    exit_code = 1

    def __init__(self, message, ledger=None):
        super().__init__(message)
        self.ledger = ledger


class ConfigError(HNLSError, ValueError):
    exit_code = 2


class NonConvergence(HNLSError):
    exit_code = 3


class MaxIter(NonConvergence):
    """Picard iteration ran out of iterations without meeting the tolerance."""


class Divergence(HNLSError):
    exit_code = 4


class BallEscape(Divergence):
    """An iterate left the ball of radius ``r`` prescribed by the radius rule."""
