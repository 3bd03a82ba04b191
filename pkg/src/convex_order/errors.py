"""Exception hierarchy shared by all modules."""


class ConvexOrderError(Exception):
    """Base class for every error raised by this package."""


class ZeroMass(ConvexOrderError):
    pass


class BadDirection(ConvexOrderError):
    pass


class DimensionMismatch(ConvexOrderError):
    pass


class OrthantViolation(ConvexOrderError):
    pass


class NumericalFailure(ConvexOrderError):
    pass


class NotSymmetric(ConvexOrderError):
    pass


class NotPsd(ConvexOrderError):
    pass


class NotOrderedOnLine(ConvexOrderError):
    """The survival functions of mu and nu cross along some direction."""


class EmptySubset(ConvexOrderError):
    pass


class NoWitness(ConvexOrderError):
    pass


class Stalled(ConvexOrderError):
    pass


class BadSpec(ConvexOrderError):
    pass


class GridMismatch(ConvexOrderError):
    pass
