"""Square-root kernel factorization of Gaussian covariances and what it enables.

Factorize a covariance ``R(t, s) = int K(t, u) K(s, u) du`` on a quadrature
grid, push Wiener integrals through the kernel to white noise, and build on
that: multiple Wiener integrals, a Monte Carlo check of the Ito formula,
bridges, series expansions and Langevin kernels.
"""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    DegenerateIntegrandError,
    DegenerateModelError,
    DependentFunctionalsError,
    FredholmError,
    GrowthConditionError,
    InvalidArgumentError,
    InvalidBasisError,
    NotPositiveSemidefiniteError,
    OutOfDomainError,
    TraceConditionError,
    UnsupportedModelError,
    UnsupportedOrderError,
)
from .numerics import TimeGrid, make_grid, make_uniform_grid, make_gauss_legendre_grid, hermite  # noqa: E402
from .covariance import (  # noqa: E402
    CovarianceModel,
    brownian_bridge,
    brownian_motion,
    fractional_brownian,
    ornstein_uhlenbeck,
    rank_one,
    truncated_series,
    user_tabulated,
)
from .factorize import FredholmKernel, factorize, known_kernel, mercer_decompose  # noqa: E402
from .transfer import StepFunction, ht_inner, wiener_integral  # noqa: E402
from .chaos import ItoFunction, TestVariable, ito_duality_check, product_formula_check  # noqa: E402
from .processes import (  # noqa: E402
    PathEnsemble,
    VolterraKernel,
    bridge_canonical,
    bridge_gram,
    bridge_orthogonal,
    langevin_kernel,
    series_expand,
    simulate,
    volterra_perturb,
)
from .modelspec import parse_model_spec  # noqa: E402
from .estimators import FredholmFactorizer, KarhunenLoeveTransformer  # noqa: E402
