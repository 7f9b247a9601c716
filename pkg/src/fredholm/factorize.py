"""Fredholm square roots of covariance operators.

The covariance operator ``f -> int R(., s) f(s) ds`` is discretized on a
quadrature grid (Nystrom) and symmetrized as ``W^{1/2} R W^{1/2}``. Its
eigenpairs give the Mercer expansion and the symmetric kernel
``K(t, s) = sum_k sqrt(lambda_k) e_k(t) e_k(s)`` with
``R(t, s) = int K(t, u) K(s, u) du``.

A :class:`FredholmKernel` tabulates ``K(t_i, u_j)``: the first argument on the
grid nodes, the second (noise) argument on its own quadrature. Mercer kernels
use the grid nodes and weights for both; closed-form kernels put the noise
argument at cell midpoints with cell-width weights, so indicator kernels
integrate exactly.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .covariance import CovarianceModel, evaluate, gram
from .errors import (
    DegenerateModelError,
    InvalidArgumentError,
    NotPositiveSemidefiniteError,
    TraceConditionError,
)
from .numerics import TimeGrid

__all__ = [
    "MercerDecomposition",
    "FredholmKernel",
    "ResidualReport",
    "EquivalenceReport",
    "mercer_decompose",
    "build_fredholm_kernel",
    "factorize",
    "factorization_residual",
    "known_kernel",
    "KNOWN_KERNELS",
    "unitary_equivalence_check",
    "save_kernel",
    "load_kernel",
]

DEFAULT_TRACE_FRACTION = 1.0 - 1e-10
DEFAULT_CLIP_TOL = 1e-12


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class MercerDecomposition:
    grid: TimeGrid
    eigenvalues: np.ndarray  # (m,), descending
    eigenfunctions: np.ndarray  # (grid.size, m), weighted-orthonormal columns
    captured_fraction: float
    quadrature_trace: float
    spectrum: np.ndarray = field(repr=False)  # every eigenvalue, descending, unclipped
    model: CovarianceModel | None = field(default=None, repr=False)

    @property
    def rank(self) -> int:
        return len(self.eigenvalues)


@dataclass(frozen=True, eq=False)
class FredholmKernel:
    grid: TimeGrid
    matrix: np.ndarray  # (grid.size, len(noise_points))
    noise_points: np.ndarray
    noise_weights: np.ndarray
    noise_basis: str = "nodal"  # "nodal" or "cell"
    symmetric: bool = False
    provenance: str = "derived"
    residual: float | None = None
    decomposition: MercerDecomposition | None = field(default=None, repr=False)
    func: Callable | None = field(default=None, repr=False)

    def __post_init__(self):
        for name in ("matrix", "noise_points", "noise_weights"):
            object.__setattr__(self, name, _frozen(getattr(self, name)))
        if self.matrix.shape != (self.grid.size, len(self.noise_points)):
            raise InvalidArgumentError("kernel matrix does not match grid and noise points")
        if self.noise_weights.shape != self.noise_points.shape:
            raise InvalidArgumentError("noise points and weights differ in length")
        if self.noise_basis not in ("nodal", "cell"):
            raise InvalidArgumentError(f"unknown noise basis {self.noise_basis!r}")

    @property
    def n_noise(self) -> int:
        return len(self.noise_points)

    def evaluate(self, t, s):
        """``K(t, s)`` from the closed form, or from the table at a (node, noise point) pair."""
        if self.func is not None:
            out = np.asarray(self.func(np.asarray(t, float), np.asarray(s, float)), dtype=float)
            return out if out.ndim else float(out)
        t, s = np.broadcast_arrays(np.asarray(t, float), np.asarray(s, float))
        i = np.searchsorted(self.grid.nodes, t)
        j = np.searchsorted(self.noise_points, s)
        ic, jc = np.minimum(i, self.grid.size - 1), np.minimum(j, self.n_noise - 1)
        tol = 1e-12 * self.grid.T
        if (np.any(np.abs(self.grid.nodes[ic] - t) > tol)
                or np.any(np.abs(self.noise_points[jc] - s) > tol)):
            raise InvalidArgumentError(
                f"kernel {self.provenance!r} has no closed form; query grid nodes and noise points"
            )
        out = self.matrix[ic, jc]
        return out if out.ndim else float(out)

    def covariance(self) -> np.ndarray:
        """Induced covariance ``int K(t_i, u) K(t_j, u) du`` on the grid."""
        C = (self.matrix * self.noise_weights) @ self.matrix.T
        return 0.5 * (C + C.T)

    def noise_map(self) -> np.ndarray:
        """Matrix taking iid standard normals to path values: ``K diag(sqrt(w))``."""
        return self.matrix * np.sqrt(self.noise_weights)

    def tail_integral(self, values) -> np.ndarray:
        """``int_{t_i}^T v(u) du`` for every grid node ``t_i``.

        ``values`` are tabulated on the noise points along the last axis.
        Cell kernels sum whole cells to the right of ``t_i``; nodal kernels use
        the trapezoid rule on ``[t_i, T]``.
        """
        v = np.asarray(values, dtype=float)
        w = self.noise_weights
        if self.noise_basis == "cell":
            part = np.cumsum((v * w)[..., ::-1], axis=-1)[..., ::-1]
            zero = np.zeros(v.shape[:-1] + (1,))
            return np.concatenate([part, zero], axis=-1)
        if not self.grid.has_endpoints:
            raise InvalidArgumentError("tail integrals need a grid that contains 0 and T")
        h = np.diff(self.grid.nodes)
        cells = 0.5 * h * (v[..., 1:] + v[..., :-1])
        part = np.cumsum(cells[..., ::-1], axis=-1)[..., ::-1]
        zero = np.zeros(v.shape[:-1] + (1,))
        return np.concatenate([part, zero], axis=-1)

    def with_matrix(self, matrix, provenance: str, symmetric: bool = False) -> "FredholmKernel":
        return FredholmKernel(
            self.grid, matrix, self.noise_points, self.noise_weights,
            self.noise_basis, symmetric, provenance,
        )

    def manifest(self) -> dict:
        return {
            "grid": self.grid.to_dict(),
            "noise_points": self.noise_points.tolist(),
            "noise_weights": self.noise_weights.tolist(),
            "noise_basis": self.noise_basis,
            "provenance": self.provenance,
            "symmetric": self.symmetric,
            "residual": self.residual,
            "shape": list(self.matrix.shape),
        }


def _sign_fix(V: np.ndarray) -> np.ndarray:
    # make the largest-magnitude entry of every column positive
    idx = np.argmax(np.abs(V), axis=0)
    signs = np.sign(V[idx, np.arange(V.shape[1])])
    signs[signs == 0] = 1.0
    return V * signs


def mercer_decompose(
    model: CovarianceModel,
    grid: TimeGrid,
    trace_fraction_target: float = DEFAULT_TRACE_FRACTION,
    clip_tol: float = DEFAULT_CLIP_TOL,
) -> MercerDecomposition:
    """Nystrom eigendecomposition of the covariance operator on ``grid``.

    Eigenvalues below ``clip_tol * lambda_1`` are dropped; the rank is the
    smallest ``m`` whose eigenvalues capture ``trace_fraction_target`` of the
    quadrature trace. A target of 1 keeps every retained eigenvalue.

    Raises
    ------
    NotPositiveSemidefiniteError
        If the smallest eigenvalue is below ``-clip_tol * lambda_1``.
    DegenerateModelError
        If the quadrature trace is zero.
    """
    if not 0.0 < trace_fraction_target <= 1.0:
        raise InvalidArgumentError("trace fraction target must lie in (0, 1]")
    if abs(model.T - grid.T) > 1e-12 * grid.T:
        raise InvalidArgumentError("model and grid horizons differ")
    R = gram(model, grid)
    if not np.all(np.isfinite(R)):
        raise TraceConditionError("covariance is not finite on the grid; the trace condition fails")
    sw = np.sqrt(grid.weights)
    A = sw[:, None] * R * sw[None, :]
    A = 0.5 * (A + A.T)
    lam, V = np.linalg.eigh(A)
    lam, V = lam[::-1], V[:, ::-1]
    total = float(np.dot(grid.weights, np.diag(R)))
    if not np.isfinite(total):
        raise TraceConditionError("quadrature trace is not finite")
    if total <= 0.0 or lam[0] <= 0.0:
        raise DegenerateModelError("covariance has zero trace on this grid")
    if lam[-1] < -clip_tol * lam[0]:
        raise NotPositiveSemidefiniteError(
            f"min eigenvalue {lam[-1]:.3e} below -{clip_tol:g} * {lam[0]:.3e}"
        )
    keep = int(np.count_nonzero(lam > clip_tol * lam[0]))
    cum = np.cumsum(lam[:keep]) / total
    if trace_fraction_target >= 1.0:
        m = keep
    else:
        hit = np.nonzero(cum >= trace_fraction_target)[0]
        m = int(hit[0]) + 1 if hit.size else keep
    E = _sign_fix(V[:, :m]) / sw[:, None]
    return MercerDecomposition(
        grid=grid,
        eigenvalues=_frozen(lam[:m]),
        eigenfunctions=_frozen(E),
        captured_fraction=float(cum[m - 1]),
        quadrature_trace=total,
        spectrum=_frozen(lam),
        model=model,
    )


def build_fredholm_kernel(decomp: MercerDecomposition) -> FredholmKernel:
    """Symmetric square-root kernel ``sum_k sqrt(lambda_k) e_k(t) e_k(s)``."""
    E = decomp.eigenfunctions
    K = (E * np.sqrt(decomp.eigenvalues)) @ E.T
    K = 0.5 * (K + K.T)
    grid = decomp.grid
    residual = None
    if decomp.model is not None:
        residual = _residual(K, grid.weights, gram(decomp.model, grid))[0]
    return FredholmKernel(
        grid, K, grid.nodes, grid.weights, "nodal", True, "mercer", residual, decomp
    )


def factorize(model: CovarianceModel, grid: TimeGrid, **kwargs) -> FredholmKernel:
    """Shortcut for ``build_fredholm_kernel(mercer_decompose(...))``."""
    return build_fredholm_kernel(mercer_decompose(model, grid, **kwargs))


@dataclass(frozen=True)
class ResidualReport:
    absolute: float
    relative: float


def _residual(K, w, R):
    C = (K * w) @ K.T
    diff = float(np.max(np.abs(C - R)))
    scale = float(np.max(np.abs(R)))
    return diff, diff / scale if scale > 0 else np.inf


def factorization_residual(kernel: FredholmKernel, model: CovarianceModel) -> ResidualReport:
    """``max |int K(t_i, u) K(t_j, u) du - R(t_i, t_j)|`` on the kernel's grid."""
    if abs(model.T - kernel.grid.T) > 1e-12 * kernel.grid.T:
        raise InvalidArgumentError("kernel grid and model horizon differ")
    a, r = _residual(kernel.matrix, kernel.noise_weights, gram(model, kernel.grid))
    return ResidualReport(a, r)


def _indicator(t, s):
    return (s < t).astype(float)


def _closed_forms(T: float, f: Callable | None):
    def bb_orth(t, s):
        return _indicator(t, s) - t / T

    def bb_canon(t, s):
        with np.errstate(divide="ignore", invalid="ignore"):
            v = np.where(s < t, (T - t) / (T - s), 0.0)
        return v

    def degenerate(t, s):
        if f is None:
            raise InvalidArgumentError("degenerate-rank-one needs f")
        return np.asarray(f(t), dtype=float) * ((s >= 0) & (s < 1.0))

    return {
        "brownian-motion-indicator": lambda t, s: _indicator(t, s),
        "brownian-bridge-orthogonal": bb_orth,
        "degenerate-rank-one": degenerate,
        "brownian-bridge-canonical-volterra": bb_canon,
    }


KNOWN_KERNELS = (
    "brownian-motion-indicator",
    "brownian-bridge-orthogonal",
    "degenerate-rank-one",
    "brownian-bridge-canonical-volterra",
)


def known_kernel(name: str, grid: TimeGrid, f: Callable | None = None) -> FredholmKernel:
    """Tabulate one of the closed-form kernels.

    ``brownian-motion-indicator``
        ``1[s < t]``.
    ``brownian-bridge-orthogonal``
        ``1[s < t] - t/T``.
    ``degenerate-rank-one``
        ``f(t) 1[0 <= s < 1]`` (``f`` required); the rank-one process ``f(t) xi``.
    ``brownian-bridge-canonical-volterra``
        ``(T - t)/(T - s)`` for ``s < t``, else 0.

    The noise argument is tabulated at cell midpoints, so the jump of every
    indicator falls between quadrature points.
    """
    forms = _closed_forms(grid.T, f)
    if name not in forms:
        raise InvalidArgumentError(f"unknown kernel {name!r}; choose from {KNOWN_KERNELS}")
    if name == "degenerate-rank-one" and f is None:
        raise InvalidArgumentError("degenerate-rank-one needs f")
    fn = forms[name]
    mids = grid.cell_midpoints
    K = fn(grid.nodes[:, None], mids[None, :])
    return FredholmKernel(
        grid, K, mids, grid.cell_widths, "cell", False, name, func=fn
    )


@dataclass(frozen=True)
class EquivalenceReport:
    max_abs_diff: float
    tol: float
    passed: bool


def unitary_equivalence_check(k1: FredholmKernel, k2: FredholmKernel, tol: float) -> EquivalenceReport:
    """Two kernels are unitarily related iff they induce the same covariance."""
    if not k1.grid.same_as(k2.grid):
        raise InvalidArgumentError("kernels live on different grids")
    d = float(np.max(np.abs(k1.covariance() - k2.covariance())))
    return EquivalenceReport(d, tol, bool(d <= tol))


def save_kernel(kernel: FredholmKernel, path, extra: dict | None = None) -> tuple[Path, Path]:
    """Write ``path`` (CSV matrix) and a JSON manifest next to it."""
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        for row in kernel.matrix:
            w.writerow([repr(float(x)) for x in row])
    manifest = kernel.manifest()
    if extra:
        manifest.update(extra)
    mpath = path.with_suffix(".json")
    mpath.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path, mpath


def load_kernel(path) -> FredholmKernel:
    path = Path(path)
    manifest = json.loads(path.with_suffix(".json").read_text())
    with open(path, newline="") as fh:
        M = np.array([[float(x) for x in r] for r in csv.reader(fh) if r])
    if list(M.shape) != manifest["shape"]:
        raise InvalidArgumentError("kernel CSV shape disagrees with its manifest")
    return FredholmKernel(
        TimeGrid.from_dict(manifest["grid"]),
        M,
        manifest["noise_points"],
        manifest["noise_weights"],
        manifest["noise_basis"],
        bool(manifest["symmetric"]),
        manifest["provenance"],
        manifest.get("residual"),
    )
