"""Exception types raised across the package.

Every error derives from :class:`FredholmError` so callers (the CLI in
particular) can map precondition failures to a single exit code.
"""


class FredholmError(Exception):
    """Base class; ``kind`` is a stable machine-readable identifier."""

    kind = "error"


class InvalidArgumentError(FredholmError, ValueError):
    kind = "invalid-argument"


class OutOfDomainError(FredholmError, ValueError):
    kind = "out-of-domain"


class NotPositiveSemidefiniteError(FredholmError, ValueError):
    kind = "not-positive-semidefinite"


class DegenerateModelError(FredholmError, ValueError):
    kind = "degenerate-model"


class TraceConditionError(FredholmError, ValueError):
    kind = "trace-condition"


class UnsupportedModelError(FredholmError, ValueError):
    kind = "unsupported-model"


class DegenerateIntegrandError(FredholmError, ValueError):
    kind = "degenerate-integrand"


class UnsupportedOrderError(FredholmError, ValueError):
    kind = "unsupported-order"


class GrowthConditionError(FredholmError, ValueError):
    kind = "growth-condition-violated"


class DependentFunctionalsError(FredholmError, ValueError):
    kind = "dependent-functionals"


class InvalidBasisError(FredholmError, ValueError):
    kind = "invalid-basis"
