"""Exception hierarchy shared by all aridprob modules.

The CLI maps these onto exit codes: usage/validation problems exit 1,
data problems (files on disk) exit 2, anything else exits 3.
"""


class AridProbError(Exception):
    """Base class for all errors raised by this package."""


class DomainError(AridProbError, ValueError):
    """A value outside the mathematical domain of an operation."""


class ValidationError(AridProbError, ValueError):
    """A type or configuration invariant does not hold."""


class UsageError(AridProbError):
    """An API or CLI contract was violated by the caller."""


class ShapeError(UsageError):
    """Array dimensions do not match what an operation requires."""


class DataError(AridProbError):
    """Something is wrong with data read from disk."""


class ParseError(DataError):
    """A file row or record could not be parsed."""


class SchemaError(DataError):
    """File contents are structurally inconsistent with the expected schema."""


class CoverageError(DataError):
    """Requested years or months are not covered by the data."""


class IntegrityError(DataError):
    """A binary file is truncated or corrupt."""


class IncompatibleCheckpointError(DataError):
    """A checkpoint was written by an incompatible format version."""
