"""Covariance functions R(t, s) and the checks run on them before factorizing."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from .errors import InvalidArgumentError, OutOfDomainError
from .numerics import TimeGrid, make_grid

__all__ = [
    "CovarianceModel",
    "brownian_motion",
    "fractional_brownian",
    "brownian_bridge",
    "ornstein_uhlenbeck",
    "rank_one",
    "truncated_series",
    "user_tabulated",
    "evaluate",
    "trace",
    "gram",
    "check_psd",
    "variance_increments",
    "TraceReport",
    "PsdReport",
    "read_covariance_csv",
    "write_covariance_csv",
]

KINDS = (
    "brownian-motion",
    "fractional-brownian",
    "brownian-bridge",
    "ornstein-uhlenbeck",
    "rank-one",
    "truncated-series",
    "user-tabulated",
)


@dataclass(frozen=True, eq=False)
class CovarianceModel:
    """A covariance function on ``[0, T]``.

    Build instances with the module-level constructors
    (:func:`brownian_motion`, :func:`fractional_brownian`, ...). ``bounded_variation``
    records whether ``t -> R(t, s)`` is of bounded variation with uniformly
    bounded total variation; the extended pairing and the Ito duality harness
    refuse models that do not declare it.
    """

    kind: str
    T: float
    params: dict
    func: Callable = field(repr=False)
    bounded_variation: bool = True

    def __call__(self, t, s):
        return evaluate(self, t, s)

    def variance(self, t):
        return evaluate(self, t, t)

    def to_dict(self) -> dict:
        out = {"kind": self.kind, "T": self.T}
        out.update({k: v for k, v in self.params.items() if _jsonable(v)})
        return out


def _jsonable(v) -> bool:
    return isinstance(v, (int, float, str, bool)) or v is None


def _check_T(T):
    if not T > 0 or not np.isfinite(T):
        raise InvalidArgumentError(f"horizon must be positive and finite, got {T!r}")
    return float(T)


def brownian_motion(T: float = 1.0) -> CovarianceModel:
    return CovarianceModel("brownian-motion", _check_T(T), {}, np.minimum)


def fractional_brownian(H: float, T: float = 1.0) -> CovarianceModel:
    if not 0.0 < H < 1.0:
        raise InvalidArgumentError(f"Hurst index must lie in (0, 1), got {H!r}")
    h2 = 2.0 * H

    def R(t, s):
        return 0.5 * (t**h2 + s**h2 - np.abs(t - s) ** h2)

    return CovarianceModel("fractional-brownian", _check_T(T), {"H": float(H)}, R)


def brownian_bridge(T: float = 1.0) -> CovarianceModel:
    T = _check_T(T)
    return CovarianceModel(
        "brownian-bridge", T, {}, lambda t, s: np.minimum(t, s) - t * s / T
    )


def ornstein_uhlenbeck(theta: float = 1.0, sigma: float = 1.0, T: float = 1.0) -> CovarianceModel:
    """OU process started at 0: ``dX = -theta X dt + sigma dW``, ``X_0 = 0``."""
    if not theta > 0:
        raise InvalidArgumentError(f"mean reversion theta must be positive, got {theta!r}")
    c = sigma**2 / (2.0 * theta)

    def R(t, s):
        return c * (np.exp(-theta * np.abs(t - s)) - np.exp(-theta * (t + s)))

    return CovarianceModel(
        "ornstein-uhlenbeck", _check_T(T), {"theta": float(theta), "sigma": float(sigma)}, R
    )


def rank_one(f, T: float = 1.0, nodes=None, *, label: str | None = None,
             bounded_variation: bool = True) -> CovarianceModel:
    """``R(t, s) = f(t) f(s)``; ``f`` is a callable or values tabulated at ``nodes``."""
    T = _check_T(T)
    if callable(f):
        fn = f
    else:
        if nodes is None:
            raise InvalidArgumentError("tabulated f needs its nodes")
        xp = np.asarray(nodes, dtype=float)
        fp = np.asarray(f, dtype=float)
        if xp.shape != fp.shape:
            raise InvalidArgumentError("f values and nodes differ in length")
        fn = lambda t: np.interp(t, xp, fp)  # noqa: E731
    params = {"f": label or getattr(f, "__name__", "tabulated")}
    return CovarianceModel(
        "rank-one", T, params, lambda t, s: fn(t) * fn(s), bounded_variation
    )


def _bm_kl_basis(n: int, T: float):
    # e_k(t) = int_0^t sqrt(2/T) cos((k - 1/2) pi s / T) ds
    freqs = (np.arange(1, n + 1) - 0.5) * np.pi / T
    amp = np.sqrt(2.0 / T) / freqs

    def basis(t):
        t = np.asarray(t, dtype=float)
        return amp * np.sin(np.multiply.outer(t, freqs))

    return basis


def truncated_series(n: int = 10, T: float = 1.0, basis: Sequence[Callable] | None = None) -> CovarianceModel:
    """Finite-rank model ``R(t, s) = sum_k e_k(t) e_k(s)``.

    Without ``basis`` the ``e_k`` are integrals of the orthonormal cosine
    system ``sqrt(2/T) cos((k - 1/2) pi s / T)``, i.e. the rank-``n``
    Karhunen-Loeve truncation of Brownian motion.
    """
    T = _check_T(T)
    if basis is None:
        if int(n) != n or n < 1:
            raise InvalidArgumentError(f"series rank must be >= 1, got {n!r}")
        table = _bm_kl_basis(int(n), T)
    else:
        fns = list(basis)
        n = len(fns)
        if n == 0:
            raise InvalidArgumentError("empty basis")

        def table(t):
            t = np.asarray(t, dtype=float)
            return np.stack([np.broadcast_to(np.asarray(e(t), dtype=float), t.shape) for e in fns], axis=-1)

    def R(t, s):
        return np.sum(table(t) * table(s), axis=-1)

    return CovarianceModel("truncated-series", T, {"n": int(n)}, R)


def user_tabulated(matrix, nodes, *, bounded_variation: bool = False) -> CovarianceModel:
    """Covariance known only on ``nodes``; off-grid values are bilinear interpolants."""
    nodes = np.asarray(nodes, dtype=float)
    M = np.asarray(matrix, dtype=float)
    if M.ndim != 2 or M.shape != (len(nodes), len(nodes)):
        raise InvalidArgumentError("tabulated covariance must be square and match its nodes")
    if np.any(np.diff(nodes) <= 0) or nodes[0] < 0:
        raise InvalidArgumentError("tabulation nodes must be increasing and non-negative")
    scale = max(np.max(np.abs(M)), np.finfo(float).tiny)
    if np.max(np.abs(M - M.T)) > 1e-9 * scale:
        raise InvalidArgumentError("tabulated covariance is not symmetric to 1e-9 relative")
    M = 0.5 * (M + M.T)
    interp = RegularGridInterpolator((nodes, nodes), M, method="linear")
    T = float(nodes[-1])

    def R(t, s):
        t, s = np.broadcast_arrays(np.asarray(t, dtype=float), np.asarray(s, dtype=float))
        pts = np.stack([t.ravel(), s.ravel()], axis=-1)
        return interp(pts).reshape(t.shape)

    model = CovarianceModel(
        "user-tabulated", _check_T(T), {"n_nodes": len(nodes)}, R, bounded_variation
    )
    object.__setattr__(model, "_table", (nodes, M))
    return model


def evaluate(model: CovarianceModel, t, s):
    """``R(t, s)``; arrays broadcast. Raises :class:`OutOfDomainError` off ``[0, T]``."""
    t = np.asarray(t, dtype=float)
    s = np.asarray(s, dtype=float)
    eps = 1e-12 * model.T
    for x in (t, s):
        if np.any(x < -eps) or np.any(x > model.T + eps):
            raise OutOfDomainError(f"time outside [0, {model.T}]")
    t = np.clip(t, 0.0, model.T)
    s = np.clip(s, 0.0, model.T)
    out = np.asarray(model.func(t, s), dtype=float)
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class TraceReport:
    value: float
    refined_value: float
    finite: bool


def trace(model: CovarianceModel, grid: TimeGrid) -> TraceReport:
    """Quadrature of ``int_0^T R(t, t) dt`` plus a refinement stability flag.

    ``finite`` is True when the value is finite and doubling the resolution
    moves it by less than 1 %.
    """
    value = float(np.dot(grid.weights, evaluate(model, grid.nodes, grid.nodes)))
    n = grid.n if grid.has_endpoints else grid.size
    fine = make_grid(grid.T, 2 * n, grid.rule)
    refined = float(np.dot(fine.weights, evaluate(model, fine.nodes, fine.nodes)))
    finite = bool(np.isfinite(value) and np.isfinite(refined))
    if finite:
        finite = abs(refined - value) <= 0.01 * max(abs(refined), np.finfo(float).tiny)
    return TraceReport(value, refined, finite)


def gram(model: CovarianceModel, grid: TimeGrid) -> np.ndarray:
    """``R(t_i, t_j)`` on the grid, symmetric bit-for-bit."""
    t = grid.nodes
    G = evaluate(model, t[:, None], t[None, :])
    return np.triu(G) + np.triu(G, 1).T


@dataclass(frozen=True)
class PsdReport:
    min_eigenvalue: float
    max_eigenvalue: float
    passed: bool


def check_psd(matrix, tol: float = 1e-10) -> PsdReport:
    """Pass iff the smallest eigenvalue is ``>= -tol * largest``."""
    A = np.asarray(matrix, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise InvalidArgumentError("matrix must be square")
    scale = max(np.max(np.abs(A)), np.finfo(float).tiny) if A.size else 1.0
    if np.max(np.abs(A - A.T), initial=0.0) > 1e-12 * scale:
        raise InvalidArgumentError("matrix is not symmetric")
    ev = np.linalg.eigvalsh(A)
    lo, hi = float(ev[0]), float(ev[-1])
    return PsdReport(lo, hi, bool(lo >= -tol * max(hi, 0.0)))


def variance_increments(model: CovarianceModel, grid: TimeGrid) -> np.ndarray:
    """Increments ``R(t_{i+1}, t_{i+1}) - R(t_i, t_i)`` of the variance function."""
    return np.diff(evaluate(model, grid.nodes, grid.nodes))


def read_covariance_csv(path) -> CovarianceModel:
    """Read a tabulated covariance: header row of node times, then the matrix."""
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r]
    if len(rows) < 3:
        raise InvalidArgumentError("covariance CSV needs a header and at least two rows")
    try:
        nodes = np.array([float(x) for x in rows[0]])
        M = np.array([[float(x) for x in r] for r in rows[1:]])
    except ValueError as exc:
        raise InvalidArgumentError(f"non-numeric entry in covariance CSV: {exc}") from None
    return user_tabulated(M, nodes)


def write_covariance_csv(path, model: CovarianceModel, grid: TimeGrid) -> None:
    G = gram(model, grid)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([repr(float(x)) for x in grid.nodes])
        for row in G:
            w.writerow([repr(float(x)) for x in row])
