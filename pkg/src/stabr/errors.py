"""Exception hierarchy shared by every module."""


class StabrError(Exception):
    """Base class for errors raised by this package."""


class DimensionError(StabrError, ValueError):
    """Operand shapes are inconsistent."""


class VocabularyError(StabrError, IndexError):
    """A song, tag or target index falls outside its vocabulary."""


class DataFormatError(StabrError, ValueError):
    """An input file does not follow its documented format."""


class CheckpointError(StabrError):
    """A checkpoint is corrupt, truncated, or incompatible with this build."""
