"""Exception hierarchy shared across the engine.

The CLI maps these onto exit codes: :class:`DataError` -> 3,
:class:`NumericError` -> 4. Shape problems are programming errors and
derive from :class:`ValueError` so they surface normally in library use.
"""


class SpeckleNetError(Exception):
    """Base class for every error raised on purpose by this package."""


class ShapeError(SpeckleNetError, ValueError):
    pass


class NumericError(SpeckleNetError, ArithmeticError):
    pass


class DataError(SpeckleNetError, ValueError):
    pass


class ImageFormatError(DataError):
    pass


class ManifestError(DataError):
    pass


class TaxonomyError(DataError):
    pass


class WeightFileError(DataError):
    pass


class BadMagicError(WeightFileError):
    pass


class VersionMismatchError(WeightFileError):
    pass


class TruncatedFileError(WeightFileError):
    pass


class SpecMismatchError(WeightFileError):
    pass
