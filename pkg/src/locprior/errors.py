"""Exception types shared by every module."""


class LocPriorError(Exception):
    """Base class for all errors raised by this package."""


class DimensionError(LocPriorError, ValueError):
    """Tensor shapes are incompatible with the requested operation."""


class ParameterError(LocPriorError, ValueError):
    """A scalar argument is outside its admissible range."""


class RangeError(LocPriorError, IndexError):
    """A box or index lies outside the addressed array."""


class ValidationError(LocPriorError, ValueError):
    """Input data violates a structural invariant (rotation, intrinsics, file format)."""
