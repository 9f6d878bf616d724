"""Exception hierarchy shared by all audiodiv modules."""


class AudiodivError(Exception):
    """Base class for all errors raised by this package."""


class FormatError(AudiodivError):
    """A container (NPY, WAV, MIDI, CSV, JSON) is malformed or unsupported."""


class DataError(AudiodivError):
    """Well-formed input whose content is unusable (NaN/Inf, unknown names, rank-0 data)."""


class IoError(AudiodivError):
    """A file could not be read or written."""


class DomainError(AudiodivError):
    """An argument is outside the operation's domain (shape/range mismatch)."""


class NumericalError(AudiodivError):
    """An iterative numerical routine failed to converge."""


class InsufficientData(AudiodivError):
    """Too few samples for the requested estimator."""


class DegenerateData(AudiodivError):
    """Data is structurally degenerate for the requested statistic."""
