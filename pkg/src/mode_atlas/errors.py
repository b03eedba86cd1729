class ModeAtlasError(Exception):
    """Base class for package errors."""


class InvalidInputError(ModeAtlasError, ValueError):
    pass


class DivergedStartError(ModeAtlasError):
    """Mean-shift start too far from every sample: all kernel weights underflow."""


class InvalidMomentError(ModeAtlasError, ValueError):
    pass


class NumericError(ModeAtlasError, ArithmeticError):
    pass


class InsufficientDataError(ModeAtlasError, ValueError):
    pass
