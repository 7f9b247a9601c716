"""Transfer of Wiener integrals to the driving Brownian motion.

A step function ``f = sum_k a_k 1_{t_k}`` (with ``1_t`` the indicator of
``[0, t)``) is mapped by the adjoint operator to ``K* f = sum_k a_k K(t_k, .)``,
a function of the noise argument. The map is an isometry from the step
functions with ``<1_t, 1_s> = R(t, s)`` into ``L^2``, and the Wiener integral
``int f dX`` has the law of ``int K* f dW``.

Grid functions are plain numpy arrays indexed like ``grid.nodes`` (or like
the kernel's noise points, for images under ``K*``).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .covariance import CovarianceModel, evaluate
from .errors import InvalidArgumentError, UnsupportedModelError
from .factorize import FredholmKernel
from .numerics import TimeGrid, bv_stieltjes_integrate

__all__ = [
    "StepFunction",
    "adjoint_apply",
    "ht_inner",
    "ht_norm",
    "wiener_coeffs",
    "wiener_integral",
    "extended_inner_indicator",
    "extended_inner",
]


@dataclass(frozen=True)
class StepFunction:
    """Piecewise constant function, ``values[i]`` on ``[breakpoints[i], breakpoints[i+1])``.

    Zero outside ``[breakpoints[0], breakpoints[-1])``.
    """

    breakpoints: tuple
    values: tuple

    def __post_init__(self):
        b = tuple(float(x) for x in self.breakpoints)
        v = tuple(float(x) for x in self.values)
        if len(b) != len(v) + 1 or len(v) == 0:
            raise InvalidArgumentError("need one more breakpoint than values")
        if any(b2 <= b1 for b1, b2 in zip(b, b[1:])):
            raise InvalidArgumentError("breakpoints must be strictly increasing")
        if b[0] < 0:
            raise InvalidArgumentError("breakpoints must be non-negative")
        object.__setattr__(self, "breakpoints", b)
        object.__setattr__(self, "values", v)

    @classmethod
    def indicator(cls, t: float) -> "StepFunction":
        """``1_t``: one on ``[0, t)``. ``t = 0`` gives the zero function."""
        if t <= 0:
            return cls((0.0, 1.0), (0.0,))
        return cls((0.0, t), (1.0,))

    @classmethod
    def constant(cls, c: float, T: float) -> "StepFunction":
        return cls((0.0, T), (c,))

    @classmethod
    def interval(cls, a: float, b: float, c: float = 1.0) -> "StepFunction":
        """``c`` on ``[a, b)``."""
        return cls((a, b), (c,))

    def __call__(self, s):
        s = np.asarray(s, dtype=float)
        b = np.asarray(self.breakpoints)
        v = np.append(np.asarray(self.values), 0.0)
        idx = np.searchsorted(b, s, side="right") - 1
        out = np.where(idx >= 0, v[np.clip(idx, 0, len(v) - 1)], 0.0)
        return out if out.ndim else float(out)

    def indicator_terms(self):
        """``[(t_k, a_k)]`` with ``f = sum_k a_k 1_{t_k}``."""
        b, v = self.breakpoints, self.values
        coef = {}
        for i, val in enumerate(v):
            coef[b[i + 1]] = coef.get(b[i + 1], 0.0) + val
            coef[b[i]] = coef.get(b[i], 0.0) - val
        return sorted((t, a) for t, a in coef.items() if a != 0.0)

    def _combine(self, other: "StepFunction", op) -> "StepFunction":
        b = sorted(set(self.breakpoints) | set(other.breakpoints))
        mids = [0.5 * (x + y) for x, y in zip(b, b[1:])]
        return StepFunction(tuple(b), tuple(op(self(m), other(m)) for m in mids))

    def __add__(self, other):
        return self._combine(other, lambda x, y: x + y)

    def __sub__(self, other):
        return self._combine(other, lambda x, y: x - y)

    def __mul__(self, c):
        return StepFunction(self.breakpoints, tuple(c * x for x in self.values))

    __rmul__ = __mul__

    def __neg__(self):
        return self * -1.0


def _kernel_row(kernel: FredholmKernel, t: float) -> np.ndarray:
    grid = kernel.grid
    if grid.contains(t):
        return kernel.matrix[grid.index_of(t)]
    if abs(t) <= 1e-12 * grid.T:
        return np.zeros(kernel.n_noise)  # 1_0 is the zero function
    raise InvalidArgumentError(f"breakpoint {t!r} is not a node of the kernel grid")


def adjoint_apply(kernel: FredholmKernel, f: StepFunction) -> np.ndarray:
    """``K* f`` tabulated on the kernel's noise points."""
    out = np.zeros(kernel.n_noise)
    for t, a in f.indicator_terms():
        out += a * _kernel_row(kernel, t)
    return out


def ht_inner(kernel: FredholmKernel, f: StepFunction, g: StepFunction) -> float:
    """``<f, g>`` computed as ``<K* f, K* g>`` in ``L^2``."""
    return float(np.dot(kernel.noise_weights, adjoint_apply(kernel, f) * adjoint_apply(kernel, g)))


def ht_norm(kernel: FredholmKernel, f: StepFunction) -> float:
    return float(np.sqrt(max(ht_inner(kernel, f, f), 0.0)))


def wiener_coeffs(kernel: FredholmKernel, f: StepFunction) -> np.ndarray:
    """Coefficients ``c`` with ``int f dX = sum_j c_j sqrt(w_j) xi_j`` in law."""
    return adjoint_apply(kernel, f)


def wiener_integral(kernel: FredholmKernel, f: StepFunction, noise) -> np.ndarray | float:
    """``int f dX`` for white-noise draws ``noise`` of shape (..., n_noise)."""
    xi = np.asarray(noise, dtype=float)
    if xi.shape[-1] != kernel.n_noise:
        raise InvalidArgumentError("noise length does not match the kernel")
    c = wiener_coeffs(kernel, f) * np.sqrt(kernel.noise_weights)
    out = xi @ c
    return out if np.ndim(out) else float(out)


def _require_bv(model: CovarianceModel):
    if not model.bounded_variation:
        raise UnsupportedModelError(
            f"{model.kind} does not declare bounded variation of t -> R(t, s)"
        )


def extended_inner_indicator(model: CovarianceModel, grid: TimeGrid, u, t: float, anchor: float):
    """``<u 1_t, 1_anchor> = int_0^t u(s) R(anchor, ds)``.

    ``u`` is tabulated on ``grid.nodes`` along its last axis (a batch of paths
    is fine). The integral is a Stieltjes sum against ``s -> R(anchor, s)``.
    """
    _require_bv(model)
    u = np.asarray(u, dtype=float)
    if u.shape[-1] != grid.size:
        raise InvalidArgumentError("u must be tabulated on the grid")
    i = grid.index_of(t)
    if i == 0:
        z = np.zeros(u.shape[:-1])
        return z if z.ndim else 0.0
    grid.index_of(anchor)
    s = grid.nodes[: i + 1]
    return bv_stieltjes_integrate(u[..., : i + 1], evaluate(model, anchor, s))


def extended_inner(model: CovarianceModel, grid: TimeGrid, u, t: float, phi: StepFunction):
    """``<u 1_t, phi>`` for a step function ``phi`` with breakpoints on the grid."""
    _require_bv(model)
    total = 0.0
    for tk, b in phi.indicator_terms():
        if abs(tk) <= 1e-12 * grid.T and not grid.contains(tk):
            continue
        total = total + b * extended_inner_indicator(model, grid, u, t, tk)
    return total
