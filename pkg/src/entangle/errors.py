"""Exception hierarchy shared by every module.

The CLI maps any ``EntangleError`` to exit code 1 and reports the class name
as the ``error`` field of a single-line JSON object on stderr.
"""


class EntangleError(Exception):
    """Base class for domain errors."""

    @property
    def code(self) -> str:
        return type(self).__name__


# dataset storage
class MissingFile(EntangleError):
    pass


class SizeMismatch(EntangleError):
    pass


class DimMismatch(EntangleError):
    pass


class NonFinite(EntangleError):
    pass


class MalformedManifest(EntangleError):
    pass


class InvalidTrajectory(EntangleError):
    pass


class IoFailure(EntangleError):
    pass


class TooFewDemos(EntangleError):
    pass


# metrics
class DegenerateVector(EntangleError):
    pass


class AllPairsDegenerate(EntangleError):
    pass


class UnknownTask(EntangleError):
    pass


# networks
class ShapeMismatch(EntangleError):
    pass


class ContextOverflow(EntangleError):
    pass


class LengthMismatch(EntangleError):
    pass


# environment
class ExpertFailure(EntangleError):
    pass


# statistics
class EmptyInput(EntangleError):
    pass


class DegenerateVariance(EntangleError):
    pass


class AllZeroDifferences(EntangleError):
    pass
