"""Exception hierarchy.

Every error carries a short kebab-case ``code`` that the CLI prints as the
name of the failed validation.
"""


class ManidriftError(ValueError):
    code = "error"


class ZeroNorm(ManidriftError):
    code = "zero-norm"


class DimensionMismatch(ManidriftError):
    code = "dimension-mismatch"


class ShapeMismatch(ManidriftError):
    code = "shape-mismatch"


class NotNormalized(ManidriftError):
    code = "not-normalized"


class NearOpposition(ManidriftError):
    code = "near-opposition"

    def __init__(self, message, row=None, epoch=None):
        super().__init__(message)
        self.row = row
        self.epoch = epoch


class MarginViolation(ManidriftError):
    code = "margin-violation"


class EmptyClass(ManidriftError):
    code = "empty-class"


class LabelOutOfRange(ManidriftError):
    code = "label-out-of-range"


class RankTooLarge(ManidriftError):
    code = "rank-too-large"

    def __init__(self, message, rank=None):
        super().__init__(message)
        self.rank = rank


class DegenerateCloud(ManidriftError):
    code = "degenerate-cloud"


class NonOrthonormalBasis(ManidriftError):
    code = "non-orthonormal-basis"


class DegenerateRegime(ManidriftError):
    code = "degenerate-regime"


class LConOutOfRange(ManidriftError):
    code = "l-con-out-of-range"


class RankConflict(ManidriftError):
    code = "rank-conflict"


class NonFinite(ManidriftError):
    code = "non-finite"

    def __init__(self, message, epoch=None):
        super().__init__(message)
        self.epoch = epoch


class InvalidParameter(ManidriftError):
    code = "invalid-parameter"


class FeatureFileError(ManidriftError):
    code = "feature-file"


class BadMagic(FeatureFileError):
    code = "bad-magic"


class BadVersion(FeatureFileError):
    code = "bad-version"


class BadHeader(FeatureFileError):
    code = "bad-header"


class TruncatedPayload(FeatureFileError):
    code = "truncated-payload"


class IoFailure(FeatureFileError):
    code = "io-failure"


class ConfigError(ManidriftError):
    code = "config"
