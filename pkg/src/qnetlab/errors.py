"""Exception types raised across the package."""


class QnetlabError(Exception):
    """Base class for package errors."""


class LayoutError(QnetlabError, ValueError):
    """Subsystem layout does not match a matrix or another layout."""


class NotHermitianError(QnetlabError, ValueError):
    pass


class NotPositiveError(QnetlabError, ValueError):
    pass


class InvalidStateError(QnetlabError, ValueError):
    pass


class InvalidChannelError(QnetlabError, ValueError):
    pass


class NoiseSpecError(QnetlabError, ValueError):
    pass


class SdpConvergenceError(QnetlabError, RuntimeError):
    """Raised when the barrier method runs out of budget.

    ``bracket`` holds the best (lower, upper) bound reached so far and
    ``certificate`` the partially converged certificate, if any.
    """

    def __init__(self, message, bracket=None, certificate=None):
        super().__init__(message)
        self.bracket = bracket
        self.certificate = certificate
