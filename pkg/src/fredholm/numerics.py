"""Time grids, quadrature, normalized Hermite polynomials and Stieltjes sums."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgumentError

__all__ = [
    "TimeGrid",
    "make_uniform_grid",
    "make_gauss_legendre_grid",
    "make_grid",
    "hermite",
    "hermite_derivative",
    "bv_stieltjes_integrate",
]


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class TimeGrid:
    """Quadrature grid on ``[0, T]``.

    Trapezoid grids carry both endpoints. Gauss-Legendre grids keep only the
    interior nodes (``has_endpoints`` is False), so their first node is > 0
    and their last node is < T.
    """

    T: float
    nodes: np.ndarray
    weights: np.ndarray
    rule: str = "trapezoid"
    has_endpoints: bool = field(default=True)

    def __post_init__(self):
        object.__setattr__(self, "nodes", _frozen(self.nodes))
        object.__setattr__(self, "weights", _frozen(self.weights))
        if self.nodes.ndim != 1 or self.nodes.shape != self.weights.shape:
            raise InvalidArgumentError("nodes and weights must be 1-d of equal length")
        if np.any(np.diff(self.nodes) <= 0):
            raise InvalidArgumentError("grid nodes must be strictly increasing")
        if np.any(self.weights <= 0):
            raise InvalidArgumentError("quadrature weights must be positive")
        if abs(self.weights.sum() - self.T) > 1e-12 * self.T:
            raise InvalidArgumentError("quadrature weights must sum to T")
        if self.has_endpoints and (self.nodes[0] != 0.0 or self.nodes[-1] != self.T):
            raise InvalidArgumentError("endpoint grid must start at 0 and end at T")

    @property
    def n(self) -> int:
        """Number of intervals (``len(nodes) - 1``)."""
        return len(self.nodes) - 1

    @property
    def size(self) -> int:
        return len(self.nodes)

    @property
    def cell_widths(self) -> np.ndarray:
        self._require_endpoints("cells")
        return np.diff(self.nodes)

    @property
    def cell_midpoints(self) -> np.ndarray:
        self._require_endpoints("cells")
        return 0.5 * (self.nodes[1:] + self.nodes[:-1])

    def _require_endpoints(self, what):
        if not self.has_endpoints:
            raise InvalidArgumentError(f"{what} need a grid that contains 0 and T")

    def index_of(self, t: float) -> int:
        """Index of the node equal to ``t`` (relative tolerance 1e-10·T)."""
        i = int(np.argmin(np.abs(self.nodes - t)))
        if abs(self.nodes[i] - t) > 1e-10 * self.T:
            raise InvalidArgumentError(f"time {t!r} is not a grid node")
        return i

    def contains(self, t: float) -> bool:
        return bool(np.min(np.abs(self.nodes - t)) <= 1e-10 * self.T)

    def same_as(self, other: "TimeGrid") -> bool:
        return self is other or (
            self.T == other.T
            and self.size == other.size
            and np.array_equal(self.nodes, other.nodes)
            and np.array_equal(self.weights, other.weights)
        )

    def to_dict(self) -> dict:
        return {
            "T": self.T,
            "rule": self.rule,
            "has_endpoints": self.has_endpoints,
            "nodes": self.nodes.tolist(),
            "weights": self.weights.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TimeGrid":
        return cls(float(d["T"]), d["nodes"], d["weights"], d["rule"], bool(d["has_endpoints"]))


def make_uniform_grid(T: float, n: int) -> TimeGrid:
    """``n + 1`` equispaced nodes on ``[0, T]`` with trapezoid weights."""
    if not T > 0:
        raise InvalidArgumentError(f"horizon must be positive, got {T!r}")
    if int(n) != n or n < 2:
        raise InvalidArgumentError(f"need n >= 2 intervals, got {n!r}")
    n = int(n)
    nodes = np.linspace(0.0, T, n + 1)
    nodes[-1] = T
    h = T / n
    weights = np.full(n + 1, h)
    weights[0] = weights[-1] = 0.5 * h
    return TimeGrid(float(T), nodes, weights, "trapezoid", True)


def make_gauss_legendre_grid(T: float, n: int) -> TimeGrid:
    """``n`` Gauss-Legendre nodes mapped to ``(0, T)``; endpoints are not nodes."""
    if not T > 0:
        raise InvalidArgumentError(f"horizon must be positive, got {T!r}")
    if int(n) != n or n < 2:
        raise InvalidArgumentError(f"need n >= 2 nodes, got {n!r}")
    x, w = np.polynomial.legendre.leggauss(int(n))
    nodes = 0.5 * T * (x + 1.0)
    weights = 0.5 * T * w
    # renormalize away the last-ulp drift so the TimeGrid invariant holds exactly
    weights *= T / weights.sum()
    return TimeGrid(float(T), nodes, weights, "gauss-legendre", False)


def make_grid(T: float, n: int, rule: str = "trapezoid") -> TimeGrid:
    if rule in ("trapezoid", "uniform"):
        return make_uniform_grid(T, n)
    if rule in ("gauss-legendre", "gl"):
        return make_gauss_legendre_grid(T, n)
    raise InvalidArgumentError(f"unknown quadrature rule {rule!r}")


def hermite(p: int, x):
    """Normalized Hermite polynomial ``He_p(x) / p!``.

    Uses the recursion ``(k+1) H_{k+1} = x H_k - H_{k-1}``, which is the
    probabilists' recursion divided through by ``(k+1)!``.
    """
    if int(p) != p or p < 0:
        raise InvalidArgumentError(f"Hermite order must be a non-negative integer, got {p!r}")
    x = np.asarray(x, dtype=float)
    prev = np.ones_like(x)
    if p == 0:
        return prev if prev.ndim else float(prev)
    cur = x.copy()
    for k in range(1, int(p)):
        prev, cur = cur, (x * cur - prev) / (k + 1)
    return cur if cur.ndim else float(cur)


def hermite_derivative(p: int, x):
    """Derivative of the normalized Hermite polynomial: ``H_p' = H_{p-1}``."""
    if int(p) != p or p < 0:
        raise InvalidArgumentError(f"Hermite order must be a non-negative integer, got {p!r}")
    if p == 0:
        z = np.zeros_like(np.asarray(x, dtype=float))
        return z if z.ndim else 0.0
    return hermite(p - 1, x)


def bv_stieltjes_integrate(f_values, g_values):
    """Riemann-Stieltjes sum of ``f dg`` with ``f`` averaged over each step.

    Both arguments are tabulated along their last axis; leading axes
    broadcast, so a batch of paths can be integrated at once.
    """
    f = np.asarray(f_values, dtype=float)
    g = np.asarray(g_values, dtype=float)
    if f.ndim == 0 or g.ndim == 0 or f.shape[-1] != g.shape[-1]:
        raise InvalidArgumentError("f and g must have the same grid length")
    fbar = 0.5 * (f[..., 1:] + f[..., :-1])
    out = np.sum(fbar * np.diff(g, axis=-1), axis=-1)
    return out if np.ndim(out) else float(out)
