"""Exception hierarchy shared by all modules."""


class SpinorLabError(Exception):
    """Base class for every error raised by the package."""


# lattice
class NonAdjacentStep(SpinorLabError):
    pass


class FiordViolation(SpinorLabError):
    pass


class Disconnected(SpinorLabError):
    pass


class NotSimplyConnected(SpinorLabError):
    pass


class AmbiguousNormal(SpinorLabError):
    pass


class EmptyDomain(SpinorLabError):
    pass


class InvalidSite(SpinorLabError):
    pass


# exact-ising
class TooLarge(SpinorLabError):
    pass


class TooWide(SpinorLabError):
    pass


class BadBoundary(SpinorLabError):
    pass


# spinor-comb
class NotADefectConfig(SpinorLabError):
    pass


class SourceCorner(SpinorLabError):
    pass


# spinor-bvp
class SolverDivergence(SpinorLabError):
    pass


class ResidualTooLarge(SpinorLabError):
    pass


class InconsistentField(SpinorLabError):
    pass


# fullplane
class TailNotConverged(SpinorLabError):
    pass


# continuum
class CoincidentPoints(SpinorLabError):
    pass


class SingularSystem(SpinorLabError):
    pass


class PolynomialZeroAtA(SpinorLabError):
    pass


class UnsupportedK(SpinorLabError):
    pass


class PathHitsCollision(SpinorLabError):
    pass


class NotConformal(SpinorLabError):
    pass


class Overflow(SpinorLabError):
    pass


# montecarlo
class NotThermalized(SpinorLabError):
    pass


# harness
class ConfigInvalid(SpinorLabError):
    pass


class UpstreamFailure(SpinorLabError):
    pass
