"""scikit-learn style wrappers around factorization and Karhunen-Loeve coordinates."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .covariance import CovarianceModel, user_tabulated
from .errors import InvalidArgumentError
from .factorize import DEFAULT_CLIP_TOL, DEFAULT_TRACE_FRACTION, build_fredholm_kernel, mercer_decompose
from .modelspec import parse_model_spec
from .numerics import make_grid
from .processes import simulate

__all__ = ["FredholmFactorizer", "KarhunenLoeveTransformer"]


def _resolve_model(model, T: float) -> CovarianceModel:
    if isinstance(model, CovarianceModel):
        return model
    if isinstance(model, str):
        return parse_model_spec(model, T)
    raise InvalidArgumentError("model must be a CovarianceModel or a model spec string")


class FredholmFactorizer(TransformerMixin, BaseEstimator):
    """Mercer square-root kernel of a covariance on a quadrature grid.

    Parameters
    ----------
    model : str or CovarianceModel, default="bm"
        Covariance to factorize, e.g. ``"fbm:H=0.75"``. Ignored when ``fit``
        receives a tabulated covariance.
    T : float, default=1.0
        Horizon used for string models.
    n_nodes : int, default=256
        Number of grid intervals.
    rule : {"trapezoid", "gauss-legendre"}, default="trapezoid"
    trace_fraction : float
        Captured-trace target for the rank.
    clip_tol : float
        Relative eigenvalue floor.

    Attributes
    ----------
    grid_, model_, decomposition_, kernel_ : fitted objects
    eigenvalues_ : ndarray
    residual_ : float
        ``max |K W K^T - R|`` on the grid.

    Examples
    --------
    >>> fz = FredholmFactorizer("bm", n_nodes=64).fit()
    >>> paths = fz.sample(10, random_state=0)
    >>> paths.shape
    (10, 65)
    """

    def __init__(self, model="bm", T=1.0, n_nodes=256, rule="trapezoid",
                 trace_fraction=DEFAULT_TRACE_FRACTION, clip_tol=DEFAULT_CLIP_TOL):
        self.model = model
        self.T = T
        self.n_nodes = n_nodes
        self.rule = rule
        self.trace_fraction = trace_fraction
        self.clip_tol = clip_tol

    def fit(self, X=None, y=None):
        """Factorize ``model``, or the covariance matrix ``X`` tabulated on the grid nodes."""
        grid = make_grid(self.T, int(self.n_nodes), self.rule)
        if X is None:
            model = _resolve_model(self.model, self.T)
        else:
            C = check_array(X, ensure_2d=True, dtype=float)
            if C.shape != (grid.size, grid.size):
                raise InvalidArgumentError(
                    f"tabulated covariance must be {grid.size}x{grid.size}, got {C.shape}"
                )
            if grid.nodes[0] <= 0.0 and not grid.has_endpoints:
                raise InvalidArgumentError("tabulated covariances need an endpoint grid")
            model = user_tabulated(C, grid.nodes)
        decomp = mercer_decompose(model, grid, self.trace_fraction, self.clip_tol)
        self.grid_ = grid
        self.model_ = model
        self.decomposition_ = decomp
        self.kernel_ = build_fredholm_kernel(decomp)
        self.eigenvalues_ = decomp.eigenvalues
        self.residual_ = self.kernel_.residual
        self.n_features_in_ = self.kernel_.n_noise
        return self

    def transform(self, X):
        """Map white-noise rows ``(n_samples, n_noise)`` to paths ``(n_samples, grid.size)``."""
        check_is_fitted(self, "kernel_")
        xi = check_array(X, dtype=float)
        if xi.shape[1] != self.kernel_.n_noise:
            raise InvalidArgumentError(
                f"expected {self.kernel_.n_noise} noise coordinates, got {xi.shape[1]}"
            )
        return xi @ self.kernel_.noise_map().T

    def sample(self, n_paths, random_state=0):
        """Reproducible paths keyed by the integer seed ``random_state``."""
        check_is_fitted(self, "kernel_")
        return simulate(self.kernel_, n_paths, int(random_state)).paths


class KarhunenLoeveTransformer(TransformerMixin, BaseEstimator):
    """Coordinates of paths in the leading Mercer eigenfunctions.

    ``transform`` returns standardized coefficients
    ``xi_k = lambda_k^{-1/2} sum_i w_i X(t_i) e_k(t_i)``, which are iid
    standard normal for paths of the fitted process; ``inverse_transform``
    rebuilds the rank-``n_components`` truncation.
    """

    def __init__(self, model="bm", T=1.0, n_nodes=256, rule="trapezoid", n_components=10):
        self.model = model
        self.T = T
        self.n_nodes = n_nodes
        self.rule = rule
        self.n_components = n_components

    def fit(self, X=None, y=None):
        grid = make_grid(self.T, int(self.n_nodes), self.rule)
        model = _resolve_model(self.model, self.T)
        decomp = mercer_decompose(model, grid, 1.0)
        m = int(self.n_components)
        if not 1 <= m <= decomp.rank:
            raise InvalidArgumentError(f"n_components must lie in [1, {decomp.rank}]")
        self.grid_ = grid
        self.eigenvalues_ = np.asarray(decomp.eigenvalues[:m])
        self.components_ = np.asarray(decomp.eigenfunctions[:, :m]).T
        self.n_features_in_ = grid.size
        return self

    def transform(self, X):
        check_is_fitted(self, "components_")
        P = check_array(X, dtype=float)
        if P.shape[1] != self.grid_.size:
            raise InvalidArgumentError(f"paths must have {self.grid_.size} columns")
        return (P * self.grid_.weights) @ self.components_.T / np.sqrt(self.eigenvalues_)

    def inverse_transform(self, X):
        check_is_fitted(self, "components_")
        Z = check_array(X, dtype=float)
        if Z.shape[1] != len(self.eigenvalues_):
            raise InvalidArgumentError(f"expected {len(self.eigenvalues_)} coefficients")
        return (Z * np.sqrt(self.eigenvalues_)) @ self.components_
