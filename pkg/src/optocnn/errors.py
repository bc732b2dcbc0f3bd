"""Exception types raised across the package."""


class OptoCNNError(Exception):
    """Base class for all validation errors raised by optocnn."""


class NotOrthogonal(OptoCNNError):
    pass


class ConvergenceFailure(OptoCNNError):
    pass


class DimensionMismatch(OptoCNNError):
    pass


class GeometryMismatch(OptoCNNError):
    pass


class NonConvergence(OptoCNNError):
    pass


class IdxError(OptoCNNError):
    """Malformed IDX payload. ``offset`` is the byte position of the fault."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset


class BadMagic(IdxError):
    pass


class TruncatedPayload(IdxError):
    pass


class DimensionOverflow(IdxError):
    pass
