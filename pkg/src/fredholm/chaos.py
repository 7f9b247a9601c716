"""Multiple Wiener integrals and Monte Carlo checks of the Ito formula.

Multiple integrals of rank-one tensors are Hermite polynomials of a single
Wiener integral: ``I_p(h^{p}) = p! |h|^p H_p(X(h)/|h|)``. Two-factor tensors
``f^{a} (x) g^{b}`` are reduced to that case by splitting ``g`` into a part
along ``f`` and a part orthogonal to it.

The Ito formula is checked in weak form: for test variables ``G`` the mean of
``G * (f(X_t) - f(X_0) - 1/2 int f''(X_s) dR(s, s))`` must match the mean of
``<DG, f'(X) 1_t>``, the pairing being the extended inner product.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np

from .covariance import CovarianceModel, evaluate
from .errors import (
    DegenerateIntegrandError,
    GrowthConditionError,
    InvalidArgumentError,
    UnsupportedModelError,
    UnsupportedOrderError,
)
from .factorize import FredholmKernel
from .numerics import TimeGrid, bv_stieltjes_integrate, hermite
from .rng import run_blocks
from .transfer import StepFunction, adjoint_apply, extended_inner_indicator

__all__ = [
    "GrowthEnvelope",
    "ItoFunction",
    "TestVariable",
    "mwi_rank_one",
    "mwi_two_factor",
    "product_formula_check",
    "ProductFormulaReport",
    "ito_lhs",
    "ito_duality_check",
    "ItoReport",
    "growth_check",
    "GrowthReport",
    "MAX_ORDER",
]

MAX_ORDER = 6


@dataclass(frozen=True)
class GrowthEnvelope:
    """``max(|f|, |f'|, |f''|) <= c exp(lam x^2)``."""

    c: float
    lam: float

    def __post_init__(self):
        if not self.c > 0 or not self.lam > 0:
            raise InvalidArgumentError("envelope constants must be positive")

    def __call__(self, x):
        return self.c * np.exp(self.lam * np.asarray(x, dtype=float) ** 2)


def _time_free(fn):
    return lambda t, x: fn(x)


@dataclass(frozen=True, eq=False)
class ItoFunction:
    """A ``C^{1,2}`` function ``f(t, x)`` with the derivatives the Ito formula needs.

    All callables take ``(t, x)`` and broadcast. ``dt`` is None for functions
    of ``x`` only.
    """

    f: Callable
    dx: Callable
    dxx: Callable
    dt: Callable | None = None
    name: str = "f"
    envelope: GrowthEnvelope | None = None

    @classmethod
    def polynomial(cls, coeffs: Sequence[float], name: str | None = None,
                   envelope: GrowthEnvelope | None = None) -> "ItoFunction":
        """Polynomial in ``x`` with coefficients in increasing degree."""
        P = np.polynomial.Polynomial(coeffs)
        d1, d2 = P.deriv(1), P.deriv(2)
        return cls(_time_free(P), _time_free(d1), _time_free(d2), None,
                   name or f"poly{list(coeffs)}", envelope)

    @classmethod
    def monomial(cls, k: int, envelope: GrowthEnvelope | None = None) -> "ItoFunction":
        c = [0.0] * k + [1.0]
        return cls.polynomial(c, name=f"x^{k}", envelope=envelope)

    @classmethod
    def from_callables(cls, f, df, d2f, name: str = "f",
                       envelope: GrowthEnvelope | None = None) -> "ItoFunction":
        return cls(_time_free(f), _time_free(df), _time_free(d2f), None, name, envelope)


@dataclass(frozen=True)
class TestVariable:
    """Polynomial ``G`` in ``X_{tau_1}, ..., X_{tau_k}``.

    ``terms`` is a sequence of ``(coefficient, exponents)`` with one exponent
    per anchor. Its Malliavin derivative is ``sum_i d_i G * 1_{tau_i}``.
    """

    __test__ = False  # keep pytest from collecting it

    anchors: tuple
    terms: tuple

    def __post_init__(self):
        anchors = tuple(float(a) for a in self.anchors)
        if not anchors:
            raise InvalidArgumentError("a test variable needs at least one anchor")
        terms = []
        for c, e in self.terms:
            e = tuple(int(x) for x in e)
            if len(e) != len(anchors) or min(e) < 0:
                raise InvalidArgumentError("each exponent tuple needs one entry per anchor")
            terms.append((float(c), e))
        object.__setattr__(self, "anchors", anchors)
        object.__setattr__(self, "terms", tuple(terms))

    @classmethod
    def power(cls, anchor: float, k: int) -> "TestVariable":
        return cls((anchor,), ((1.0, (k,)),))

    @property
    def degree(self) -> int:
        return max(sum(e) for _, e in self.terms)

    def _values(self, grid: TimeGrid, paths) -> np.ndarray:
        idx = [grid.index_of(a) for a in self.anchors]
        return np.asarray(paths)[..., idx]

    def evaluate(self, x) -> np.ndarray:
        """``G`` at anchor values ``x`` of shape (..., k)."""
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape[:-1])
        for c, e in self.terms:
            out = out + c * np.prod(x ** np.array(e), axis=-1)
        return out

    def gradient(self, x) -> np.ndarray:
        """``(d_1 G, ..., d_k G)`` at anchor values ``x``; shape (..., k)."""
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape)
        for c, e in self.terms:
            for i, ei in enumerate(e):
                if ei == 0:
                    continue
                e2 = np.array(e)
                e2[i] -= 1
                out[..., i] += c * ei * np.prod(x**e2, axis=-1)
        return out


def _images(kernel: FredholmKernel, h: StepFunction):
    c = adjoint_apply(kernel, h)
    return c, float(np.dot(kernel.noise_weights, c * c))


def _integral(kernel: FredholmKernel, c: np.ndarray, noise) -> np.ndarray:
    xi = np.asarray(noise, dtype=float)
    if xi.shape[-1] != kernel.n_noise:
        raise InvalidArgumentError("noise length does not match the kernel")
    return xi @ (c * np.sqrt(kernel.noise_weights))


def _hermite_chaos(p: int, x, norm: float):
    # p! |h|^p H_p(x / |h|)
    return math.factorial(p) * norm**p * hermite(p, np.asarray(x) / norm)


def _as_noise(noise):
    return getattr(noise, "values", noise)


def mwi_rank_one(kernel: FredholmKernel, h: StepFunction, p: int, noise):
    """``I_p(h^{(x)p})`` for each row of ``noise``."""
    noise = _as_noise(noise)
    if int(p) != p or p < 0:
        raise InvalidArgumentError("order must be a non-negative integer")
    shape = np.shape(noise)[:-1]
    if p == 0:
        return np.ones(shape) if shape else 1.0
    c, n2 = _images(kernel, h)
    if n2 <= 0.0:
        raise DegenerateIntegrandError("integrand has zero norm")
    out = _hermite_chaos(int(p), _integral(kernel, c, noise), math.sqrt(n2))
    return out if np.ndim(out) else float(out)


def mwi_two_factor(kernel: FredholmKernel, f: StepFunction, g: StepFunction, a: int, b: int, noise):
    """``I_{a+b}`` of the symmetrized tensor ``f^{(x)a} (x) g^{(x)b}``.

    With ``g = alpha f_hat + beta g_hat`` (``f_hat``, ``g_hat`` orthonormal),
    the binomial expansion leaves products of chaoses in orthogonal
    directions, ``I_{m+k}(f_hat^m (x) g_hat^k) = I_m(f_hat^m) I_k(g_hat^k)``.
    """
    noise = _as_noise(noise)
    if min(a, b) < 0:
        raise InvalidArgumentError("orders must be non-negative")
    if a + b > MAX_ORDER:
        raise UnsupportedOrderError(f"total order {a + b} exceeds {MAX_ORDER}")
    shape = np.shape(noise)[:-1]
    if a == 0:
        if b == 0:
            return np.ones(shape) if shape else 1.0
        f, g, a, b = g, f, b, a
    w = kernel.noise_weights
    cf, nf2 = _images(kernel, f)
    if nf2 <= 0.0:
        return np.zeros(shape) if shape else 0.0
    nf = math.sqrt(nf2)
    fhat = cf / nf
    xf = _integral(kernel, fhat, noise)
    if b == 0:
        out = nf**a * _hermite_chaos(a, xf, 1.0)
        return out if np.ndim(out) else float(out)
    cg = adjoint_apply(kernel, g)
    alpha = float(np.dot(w, cg * fhat))
    resid = cg - alpha * fhat
    beta = math.sqrt(max(float(np.dot(w, resid * resid)), 0.0))
    if beta <= 1e-14 * math.sqrt(max(float(np.dot(w, cg * cg)), 1e-300)):
        beta = 0.0
    xg = _integral(kernel, resid / beta, noise) if beta > 0 else 0.0
    total = 0.0
    for k in range(b + 1):
        coef = math.comb(b, k) * alpha ** (b - k) * beta**k
        if coef == 0.0:
            continue
        m = a + b - k
        term = _hermite_chaos(m, xf, 1.0)
        if k:
            term = term * _hermite_chaos(k, xg, 1.0)
        total = total + coef * term
    out = nf**a * total
    return out if np.ndim(out) else float(out)


@dataclass(frozen=True)
class ProductFormulaReport:
    p: int
    q: int
    inner: float
    n_draws: int
    max_abs_deviation: float
    max_rel_deviation: float
    tol: float
    passed: bool


def product_formula_check(kernel: FredholmKernel, f: StepFunction, g: StepFunction,
                          p: int, q: int, noise, tol: float = 1e-10) -> ProductFormulaReport:
    """Check ``I_p(f^p) I_q(g^q) = sum_r r! C(p,r) C(q,r) <f,g>^r I_{p+q-2r}(f^{p-r} g^{q-r})``.

    The identity is algebraic, so it is checked draw by draw.
    """
    noise = np.atleast_2d(_as_noise(noise))
    if p + q > MAX_ORDER:
        raise UnsupportedOrderError(f"p + q = {p + q} exceeds {MAX_ORDER}")
    cf = adjoint_apply(kernel, f)
    cg = adjoint_apply(kernel, g)
    inner = float(np.dot(kernel.noise_weights, cf * cg))
    lhs = mwi_two_factor(kernel, f, f, p, 0, noise) * mwi_two_factor(kernel, g, g, q, 0, noise)
    rhs = np.zeros(noise.shape[0])
    for r in range(min(p, q) + 1):
        c = math.factorial(r) * math.comb(p, r) * math.comb(q, r) * inner**r
        rhs = rhs + c * mwi_two_factor(kernel, f, g, p - r, q - r, noise)
    dev = np.abs(lhs - rhs)
    rel = dev / np.maximum(1.0, np.abs(lhs))
    return ProductFormulaReport(p, q, inner, noise.shape[0], float(dev.max()),
                                float(rel.max()), tol, bool(dev.max() <= tol))


@dataclass(frozen=True)
class GrowthReport:
    passed: bool
    lam_bound: float
    lam_ok: bool
    first_violation: tuple | None  # (x, which derivative) or None


def growth_check(func: ItoFunction, envelope: GrowthEnvelope | None, model: CovarianceModel,
                 grid: TimeGrid, n_samples: int = 1000) -> GrowthReport:
    """Validate ``lam < 1/(4 sup R(t,t))`` and spot-check the envelope on ``[-6 sigma, 6 sigma]``."""
    env = envelope or func.envelope
    if env is None:
        raise InvalidArgumentError(f"{func.name} declares no growth envelope")
    vmax = float(np.max(evaluate(model, grid.nodes, grid.nodes)))
    bound = 0.25 / vmax if vmax > 0 else np.inf
    lam_ok = bool(env.lam < bound)
    sigma = math.sqrt(max(vmax, 0.0))
    x = np.linspace(-6 * sigma, 6 * sigma, n_samples)
    times = grid.nodes[[0, grid.size // 2, -1]]
    first = None
    limit = env(x)
    checks = [("f", func.f), ("dx", func.dx), ("dxx", func.dxx)]
    if func.dt is not None:
        checks.append(("dt", func.dt))
    for t in times:
        for name, fn in checks:
            vals = np.abs(np.broadcast_to(np.asarray(fn(t, x), dtype=float), x.shape))
            bad = np.nonzero(~(vals <= limit))[0]
            if bad.size:
                j = bad[np.argmin(np.abs(x[bad]))]
                cand = (float(x[j]), name)
                if first is None or abs(cand[0]) < abs(first[0]):
                    first = cand
    return GrowthReport(bool(lam_ok and first is None), bound, lam_ok, first)


def _ensure_growth(func, model, grid):
    if func.envelope is not None:
        rep = growth_check(func, None, model, grid)
        if not rep.passed:
            raise GrowthConditionError(
                f"{func.name} violates its growth envelope"
                + (f" at x={rep.first_violation[0]:.4g}" if rep.first_violation else
                   f": lam must be < {rep.lam_bound:.4g}")
            )


def ito_lhs(model: CovarianceModel, grid: TimeGrid, func: ItoFunction, paths, t: float):
    """Every term of the Ito formula except the Skorohod integral.

    ``f(t, X_t) - f(0, X_0) - int_0^t d_t f(s, X_s) ds - 1/2 int_0^t d_xx f(s, X_s) dR(s, s)``
    for paths tabulated on ``grid`` (last axis). The integrals are trapezoid
    Stieltjes sums on the nodes up to ``t``.
    """
    _ensure_growth(func, model, grid)
    X = np.asarray(paths, dtype=float)
    if X.shape[-1] != grid.size:
        raise InvalidArgumentError("paths must be tabulated on the grid")
    i = grid.index_of(t)
    s = grid.nodes[: i + 1]
    Xs = X[..., : i + 1]
    out = func.f(grid.nodes[i], X[..., i]) - func.f(grid.nodes[0], X[..., 0])
    if i > 0:
        var = evaluate(model, s, s)
        out = out - 0.5 * bv_stieltjes_integrate(func.dxx(s, Xs), var)
        if func.dt is not None:
            out = out - bv_stieltjes_integrate(func.dt(s, Xs), s)
    return out


@dataclass(frozen=True)
class ItoReport:
    lhs_mean: float
    rhs_mean: float
    lhs_se: float
    rhs_se: float
    diff_se: float
    n_paths: int
    seed: int
    z: float
    tolerance_sigmas: float
    passed: bool
    meta: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)


def ito_duality_check(model: CovarianceModel, kernel: FredholmKernel, func: ItoFunction,
                      t: float, G: TestVariable, n_paths: int, seed: int, *,
                      stream: int = 0, workers: int | None = None,
                      sigmas: float = 3.5) -> ItoReport:
    """Monte Carlo check of ``E[G (ito_lhs)] = E<DG, f'(X) 1_t>``.

    Paths are simulated from ``kernel``; the pairing uses the extended inner
    product against ``model``. Passes when ``|lhs - rhs| <= sigmas * sqrt(se_l^2 + se_r^2)``.
    """
    if not model.bounded_variation:
        raise UnsupportedModelError(f"{model.kind} does not declare bounded variation")
    grid = kernel.grid
    if abs(model.T - grid.T) > 1e-12 * grid.T:
        raise InvalidArgumentError("model and kernel horizons differ")
    _ensure_growth(func, model, grid)
    i = grid.index_of(t)
    anchor_idx = [grid.index_of(a) for a in G.anchors]
    Kmap = kernel.noise_map().T  # (n_noise, size)

    def block(xi):
        X = xi @ Kmap
        xa = X[:, anchor_idx]
        lhs = G.evaluate(xa) * ito_lhs(model, grid, func, X, t)
        fx = func.dx(grid.nodes, X)
        grad = G.gradient(xa)
        rhs = np.zeros(X.shape[0])
        for j, a in enumerate(G.anchors):
            rhs += grad[:, j] * extended_inner_indicator(model, grid, fx, t, a)
        return np.stack([lhs, rhs, lhs - rhs], axis=-1)

    acc = run_blocks(block, n_paths, kernel.n_noise, seed, 3, stream=stream, workers=workers)
    mean = acc.mean()
    se = acc.std_error()
    combined = math.hypot(se[0], se[1])
    diff = abs(mean[0] - mean[1])
    z = diff / combined if combined > 0 else (0.0 if diff == 0 else np.inf)
    return ItoReport(
        float(mean[0]), float(mean[1]), float(se[0]), float(se[1]), float(se[2]),
        int(n_paths), int(seed), float(z), sigmas, bool(diff <= sigmas * combined),
        {"f": func.name, "t": float(grid.nodes[i]), "anchors": list(G.anchors), "model": model.kind},
    )
