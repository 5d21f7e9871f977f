"""Exception hierarchy.

Every error carries a short ``code`` so the command-line front end can emit
a machine-readable failure line.
"""


class PhyschanError(Exception):
    code = "error"


class InvalidArgumentError(PhyschanError, ValueError):
    code = "invalid-argument"


class UnderdeterminedDesignError(PhyschanError, ValueError):
    code = "underdetermined-design"


class SnrTooLowError(PhyschanError, ValueError):
    code = "snr-too-low"


class InsufficientDimensionsError(PhyschanError, ValueError):
    code = "insufficient-dimensions"


class RankDeficientError(PhyschanError, ArithmeticError):
    code = "rank-deficient"


class SingularSystemError(PhyschanError, ArithmeticError):
    code = "singular-system"


class SingularCovarianceError(PhyschanError, ArithmeticError):
    code = "singular-covariance"


class ConditionViolatedError(PhyschanError, ValueError):
    code = "condition-violated"

    def __init__(self, message, pair=None):
        super().__init__(message)
        self.pair = pair


class OutOfValidityError(PhyschanError, ValueError):
    code = "out-of-validity"


class NoValidNoiseError(PhyschanError, ValueError):
    code = "no-valid-noise"


class TrialFailureError(PhyschanError, RuntimeError):
    code = "too-many-failed-trials"
