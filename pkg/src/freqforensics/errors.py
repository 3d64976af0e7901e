"""Exception types shared across the toolkit."""


class FreqForensicsError(Exception):
    """Base class for all toolkit errors."""


class DimensionError(FreqForensicsError, ValueError):
    """Array shapes are incompatible with the requested operation."""


class ParameterError(FreqForensicsError, ValueError):
    """A parameter is outside its allowed range."""


class DataError(FreqForensicsError, ValueError):
    """The data does not satisfy an operation's preconditions."""


class FormatError(FreqForensicsError, ValueError):
    """A file is malformed or in an unsupported format."""


class StateError(FreqForensicsError, RuntimeError):
    """An object is in a state that does not permit the operation."""


class CodecError(FreqForensicsError, RuntimeError):
    """Image encoding or decoding failed."""


class SpectrumKindError(FreqForensicsError, TypeError):
    """A spectrum of the wrong kind was passed to a transform."""


class ConvergenceError(FreqForensicsError, RuntimeError):
    """An iterative solver failed to converge; carries diagnostics."""

    def __init__(self, message: str, diagnostics: dict | None = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class ZeroBinError(FreqForensicsError, ValueError):
    """Division by a zero-valued reference bin; carries the offending indices."""

    def __init__(self, message: str, bins: list[int]):
        super().__init__(message)
        self.bins = list(bins)
