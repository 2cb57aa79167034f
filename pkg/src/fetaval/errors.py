"""Exception hierarchy.

Every error raised on bad input derives from :class:`FetaEvalError`. The CLI
maps :class:`InvariantViolation` to exit code 3 and everything else to 2.
"""


class FetaEvalError(Exception):
    pass


class FormatError(FetaEvalError):
    """Malformed file header or unsupported encoding."""


class DataError(FetaEvalError):
    """Voxel payload cannot be interpreted as label codes."""


class AlphabetError(DataError):
    """A label code outside the tissue alphabet."""


class ManifestError(FetaEvalError):
    pass


class PhantomSpecError(FetaEvalError):
    pass


class ShapeError(FetaEvalError):
    """Grids (dims or spacing) of two inputs disagree."""


class EmptyMaskError(FetaEvalError):
    pass


class PolicyError(FetaEvalError):
    pass


class SubsetError(FetaEvalError):
    pass


class RankingError(FetaEvalError):
    pass


class StabilityError(FetaEvalError):
    pass


class DegenerateDataError(FetaEvalError):
    pass


class ReportError(FetaEvalError):
    pass


class InvariantViolation(FetaEvalError):
    """Internal consistency check failed; indicates a bug, not bad input."""


class TopologyError(InvariantViolation):
    pass
