"""Exception hierarchy shared across the package."""


class CallScatError(Exception):
    """Base class for all package errors."""


class AudioFormatError(CallScatError):
    """Unreadable, corrupt or unsupported audio file."""


class EmptyInputError(CallScatError):
    """Input carries no samples, frames or events where some are required."""


class ValidationError(CallScatError):
    """Annotation, config or data-model invariant violated."""


class ParameterError(CallScatError, ValueError):
    """Invalid parameter value passed to a builder or transform."""


class TooShortError(CallScatError, ValueError):
    """Signal shorter than the support required by a transform."""


class EmptyBandError(CallScatError):
    """Modulation-band selection kept no paths."""


class AlignmentError(CallScatError):
    """Frame grids of two representations disagree."""


class InputError(CallScatError, ValueError):
    """Malformed classifier or matcher input (non-finite, wrong shape)."""


class ProtocolError(CallScatError):
    """Evaluation protocol cannot be run on the given dataset."""
