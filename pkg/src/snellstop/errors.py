"""Exception and warning types raised by the engine.

Every error carries a stable ``code`` so the CLI and reports can name it.
"""


class SnellError(Exception):
    code = "ENGINE_ERROR"


class ParameterOutOfRange(SnellError, ValueError):
    code = "PARAMETER_OUT_OF_RANGE"


class MalformedSpec(SnellError, ValueError):
    code = "MALFORMED_SPEC"


class ProbabilitySumViolation(MalformedSpec):
    code = "PROBABILITY_SUM_VIOLATION"


class OrphanNode(MalformedSpec):
    code = "ORPHAN_NODE"


class LevelOutOfRange(SnellError, IndexError):
    code = "LEVEL_OUT_OF_RANGE"


class UnsupportedModelKind(SnellError, TypeError):
    code = "UNSUPPORTED_MODEL_KIND"


class InvalidRule(SnellError, ValueError):
    code = "INVALID_RULE"


class NegativeReward(SnellError, ValueError):
    code = "NEGATIVE_REWARD"


class NonMonotoneSequence(SnellError, ValueError):
    code = "NON_MONOTONE_SEQUENCE"


class ModelRewardMismatch(SnellError, ValueError):
    code = "MODEL_REWARD_MISMATCH"


class StaleResult(SnellError, ValueError):
    code = "STALE_RESULT"


class EpsilonOutOfRange(SnellError, ValueError):
    code = "EPSILON_OUT_OF_RANGE"


class WindowOrderViolation(SnellError, ValueError):
    code = "WINDOW_ORDER_VIOLATION"


class ModelTooLarge(SnellError, ValueError):
    code = "MODEL_TOO_LARGE"


class FloatModeRejected(SnellError, TypeError):
    code = "FLOAT_MODE_REJECTED"


class SingularRegression(SnellError, ArithmeticError):
    code = "SINGULAR_REGRESSION"


class NearTieWarning(UserWarning):
    """Float-mode equality decided by tolerance rather than bitwise."""


class SeedReuseWarning(UserWarning):
    """Evaluation ensemble shares its seed with the fitting ensemble."""
