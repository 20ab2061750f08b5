"""Exception types raised across the package.

Each error carries a short ``code`` used by the CLI for its one-line
machine-parsable failure report.
"""


class TpropError(Exception):
    code = "error"


class DimensionMismatch(TpropError, ValueError):
    code = "dimension-mismatch"


class InvalidRange(TpropError, ValueError):
    code = "invalid-range"


class DegenerateBatch(TpropError, ValueError):
    code = "degenerate-batch"


class InvalidLabel(TpropError, ValueError):
    code = "invalid-label"


class MissingContext(TpropError, ValueError):
    code = "missing-context"


class Misconfiguration(TpropError, ValueError):
    code = "misconfiguration"


class NonInvertible(TpropError, ValueError):
    code = "non-invertible"


class InvalidBijection(TpropError, ValueError):
    code = "invalid-bijection"


class FormatError(TpropError, ValueError):
    code = "format-error"


class ConsistencyError(TpropError, ValueError):
    code = "consistency-error"


class InvalidSplit(TpropError, ValueError):
    code = "invalid-split"


class ConfigError(TpropError, ValueError):
    code = "invalid-config"


class TrainingDiverged(TpropError, RuntimeError):
    code = "diverged"


class TruncatedFile(TpropError, OSError):
    code = "io-error"
