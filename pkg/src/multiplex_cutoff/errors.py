"""Exception types raised across the package."""


class MultiplexError(Exception):
    """Base class for every error raised by this package."""


class EmptyPolytope(MultiplexError):
    """No point of [0,1]^I satisfies the doubly stochastic equalities."""


class NoInteriorPoint(MultiplexError):
    """The permissible set has no strictly positive point."""


class ZeroProbability(MultiplexError):
    """A layer probability is zero where a logarithm is needed."""


class NotErgodic(MultiplexError):
    pass


class StateSpaceTooLarge(MultiplexError):
    pass


class PreconditionViolated(MultiplexError):
    pass


class CertificateFailed(MultiplexError):
    def __init__(self, clause: str, detail: str = ""):
        super().__init__(f"certificate clause failed: {clause} {detail}".strip())
        self.clause = clause


class ZeroWindow(MultiplexError):
    """The cutoff window is zero, so no Gaussian profile exists."""


class GridTooLarge(MultiplexError):
    pass


class ConfigError(MultiplexError):
    pass
