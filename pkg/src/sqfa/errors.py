"""Exception types shared across the package."""


class SqfaError(Exception):
    """Base class for all errors raised by this package."""


class DimensionMismatch(SqfaError):
    """Operands have incompatible shapes."""


class AsymmetricMatrix(SqfaError):
    """A matrix required to be symmetric is asymmetric beyond roundoff."""


class NotPositiveDefinite(SqfaError):
    """Cholesky factorization failed: a pivot was not strictly positive."""


class DegenerateDistance(SqfaError):
    """Distance gradient requested at (numerically) coincident points.

    Callers accumulating pairwise gradients must treat the pair's
    contribution as zero.
    """


class EmptyClass(SqfaError):
    """A class label has no samples."""


class SingleSampleClass(SqfaError):
    """A class has a single sample; its covariance is not estimable."""


class ParseError(SqfaError):
    """A data file could not be parsed; the message names row/field."""


class LabelOutOfRange(SqfaError):
    """A class label is negative or not contiguous from zero."""


class UnknownSpec(SqfaError):
    """Unknown toy-dataset name."""


class UnknownSweep(SqfaError):
    """Unknown sweep-table name."""


class TrainSmallerThanK(SqfaError):
    """kNN requested more neighbors than there are training samples."""


class NoImprovingStep(SqfaError):
    """Line search failed to find an improving step at initialization."""


class NonPositiveVariance(SqfaError):
    """A variance parameter must be strictly positive."""
