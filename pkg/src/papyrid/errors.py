"""Exception hierarchy.

The CLI maps :class:`InputError` to exit code 1 and :class:`NumericalError`
to exit code 2; everything else is a bug.
"""


class PapyridError(Exception):
    """Base class for all errors raised by this package."""


class InputError(PapyridError):
    """Bad user input: files, names, shapes, or parameter values."""


class NumericalError(PapyridError):
    """A numerical routine could not produce a usable result."""


class MalformedNameError(InputError):
    """Filename stem does not end in an ``_<digits>`` sample suffix."""


class EmptyCorpusError(InputError):
    """Directory contains no readable image with a parseable name."""


class InsufficientSamplesError(InputError):
    """A writer has too few documents to build the requested split."""


class EmptyHistogramError(InputError):
    """Histogram has no counts."""


class UnknownMethodError(InputError):
    """Unrecognized method name."""


class DimensionMismatchError(InputError):
    """Array dimensions do not line up (mask vs image, vector vs model)."""


class ImageTooSmallError(InputError):
    """Image is too small to build a scale space."""


class InsufficientSampleError(InputError):
    """Too few vectors to fit the requested transform."""


class InsufficientDescriptorsError(InputError):
    """Pooled descriptor count is too small to train codebooks."""


class EmptyDescriptorSetError(InputError):
    """A document yielded no local descriptors."""


class NotFittedError(PapyridError):
    """Model used before fitting."""


class TooFewPointsError(InputError):
    """Fewer points than clusters."""


class TooFewDocumentsError(InputError):
    """Not enough documents for the evaluation protocol."""


class EmptyTrainSetError(InputError):
    """Classifier received an empty training set."""


class SingleClassError(InputError):
    """Classifier training requires at least two writers."""


class MissingPredictionError(InputError):
    """A test document has no prediction."""


class EmptySetForGmpError(InputError):
    """Pooling over an empty embedding set is undefined for gmp mode."""


class RankDeficientError(NumericalError):
    """All eigenvalues below the stabilization floor."""


class NonFiniteInputError(NumericalError):
    """Input contains NaN or infinity."""


class ConvergenceError(NumericalError):
    """Iterative solver exhausted its iteration budget."""
