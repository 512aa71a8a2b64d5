"""Exception hierarchy shared by every module."""


class FedLQRError(Exception):
    pass


class SingularMatrix(FedLQRError):
    pass


class NonConvergence(FedLQRError):
    pass


class DimensionMismatch(FedLQRError, ValueError):
    pass


class NotPositiveDefinite(FedLQRError, ValueError):
    pass


class Diverged(FedLQRError):
    """A trajectory blew past the divergence threshold."""


class UnstablePolicy(FedLQRError):
    pass


class UnstablePerturbation(FedLQRError):
    """One of the two perturbed policies of a two-point estimate is unstable."""


class SingularMassMatrix(FedLQRError):
    pass


class ConfigError(FedLQRError, ValueError):
    """Malformed configuration; ``field`` and ``line`` locate the problem when known."""

    def __init__(self, message, field=None, line=None):
        super().__init__(message)
        self.field = field
        self.line = line


class NoConvergentStepsize(FedLQRError):
    pass
