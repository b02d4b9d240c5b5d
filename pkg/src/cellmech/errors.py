"""Shared exception types. CLI maps these to exit code 1 with the class name on stderr."""


class CellmechError(Exception):
    """Base class for all package errors."""


class ParamOutOfBounds(CellmechError):
    pass


class DegenerateGeometry(CellmechError):
    pass


class ElementInverted(CellmechError):
    pass


class InterpenetrationDetected(CellmechError):
    pass


class MaxIterationsExceeded(CellmechError):
    pass


class LineSearchFailed(CellmechError):
    pass


class SingularRestOffsets(CellmechError):
    pass


class SingularNormals(CellmechError):
    pass


class NonPositiveJacobian(CellmechError):
    pass


class TooManyFailures(CellmechError):
    pass


class NonFiniteLoss(CellmechError):
    pass


class SQPNoConvergence(CellmechError):
    pass


class SingularKKTMatrix(CellmechError):
    pass


class SingularTangent(CellmechError):
    pass


class InnerFailure(CellmechError):
    pass
