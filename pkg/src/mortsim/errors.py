"""Exception hierarchy.

Every error maps onto one CLI exit code class: input problems (2), numeric
failures (3) and internal invariant violations (4).
"""


class MortsimError(Exception):
    exit_code = 4


class InputError(MortsimError, ValueError):
    exit_code = 2


class ParseError(InputError):
    pass


class MissingCell(InputError):
    pass


class DuplicateCell(InputError):
    pass


class RangeError(InputError):
    pass


class ShapeMismatch(InputError):
    pass


class InvalidSpec(InputError):
    pass


class EmptyEnsemble(InputError):
    pass


class EmptyBatch(InputError):
    pass


class EmptyDataset(InputError):
    pass


class EmptyTable(InputError):
    pass


class SurfaceTooShort(InputError):
    pass


class HorizonInPast(InputError):
    pass


class CheckpointMismatch(InputError):
    pass


class InsufficientHorizon(InputError):
    pass


class SchemeUndefined(InputError):
    pass


class SurfaceGap(InputError):
    pass


class DegenerateMatrix(InputError):
    pass


class DegenerateCurve(InputError):
    pass


class MissingArtifact(InputError):
    pass


class EmptyDenominator(MortsimError, ArithmeticError):
    """No residents between 15 and pension age; the ratio is undefined."""

    exit_code = 3


class TrainingDiverged(MortsimError, ArithmeticError):
    exit_code = 3


class InvariantViolation(MortsimError, AssertionError):
    exit_code = 4
