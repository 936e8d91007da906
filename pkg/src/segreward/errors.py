"""Exception types shared across the package."""


class SegRewardError(Exception):
    """Base class for all package errors."""


class InvalidGeometry(SegRewardError):
    """Non-finite coordinates or a malformed polygon."""


class ShapeError(SegRewardError):
    """Mask dimensions do not match."""


class CorruptRle(SegRewardError):
    """RLE counts inconsistent with the declared mask size."""


class SegmenterUnavailable(SegRewardError):
    """Segmenter transport failure, timeout, or malformed reply."""


class UnknownImage(SegRewardError):
    """Segmenter does not know the referenced image."""


class ParseError(SegRewardError):
    """Malformed annotation or prediction file."""


class DuplicateSample(SegRewardError):
    """Two records share a sample_id."""


class ConsistencyError(SegRewardError):
    """Record or ground-truth fields violate an invariant."""


class AlignmentError(SegRewardError):
    """Predictions and ground truth do not cover the same sample ids."""


class EmptyEvaluation(SegRewardError):
    """A metric was requested over zero samples."""


class InvalidReward(SegRewardError):
    """Non-finite reward fed to the advantage normalizer."""


class TrainingDiverged(SegRewardError):
    """Toy trainer produced a non-finite loss."""
