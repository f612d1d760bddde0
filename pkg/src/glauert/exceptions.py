"""Exception hierarchy shared by all modules."""


class GlauertError(Exception):
    """Base class for all errors raised by this package."""


class ParseError(GlauertError):
    pass


class TopologyError(GlauertError):
    pass


class TagError(GlauertError):
    pass


class SupersonicError(GlauertError, ValueError):
    pass


class DomainError(GlauertError, ValueError):
    pass


class SizeMismatchError(GlauertError, ValueError):
    pass


class ContinuityWarning(UserWarning):
    pass


class QuadratureError(GlauertError):
    pass


class DegenerateFaceError(GlauertError):
    pass


class SingularPointError(GlauertError, ValueError):
    pass


class NearSurfaceError(GlauertError, ValueError):
    """Raised when potentials are requested too close to the coupling surface.

    The offending point indices are kept in ``indices``.
    """

    def __init__(self, message, indices=()):
        super().__init__(message)
        self.indices = list(indices)


class InteriorPointError(GlauertError, ValueError):
    def __init__(self, message, indices=()):
        super().__init__(message)
        self.indices = list(indices)


class DimensionMismatchError(GlauertError, ValueError):
    pass


class EtaError(GlauertError, ValueError):
    pass


class NonConvergence(GlauertError):
    """GMRES hit its iteration cap; ``report`` carries the residual history."""

    def __init__(self, message, report=None, solution=None):
        super().__init__(message)
        self.report = report
        self.solution = solution


class Breakdown(GlauertError):
    pass


class SingularPreconditioner(GlauertError):
    pass


class RankError(GlauertError):
    pass


class CapExceeded(GlauertError):
    pass


class ConfigError(GlauertError, ValueError):
    pass
