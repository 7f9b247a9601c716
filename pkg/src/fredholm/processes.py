"""Sample paths, series expansions, bridges and kernel transforms.

Paths are generated from a :class:`~fredholm.factorize.FredholmKernel` as
``X(t_i) = sum_j K(t_i, u_j) sqrt(w_j) xi_j`` with the reproducible noise of
:mod:`fredholm.rng`. Kernel transforms (Volterra perturbation, Langevin
solution) return new tabulated kernels on the same grid and noise points.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .covariance import CovarianceModel, evaluate
from .errors import DependentFunctionalsError, InvalidArgumentError, InvalidBasisError
from .factorize import FredholmKernel, factorize
from .numerics import TimeGrid
from .rng import NoiseVector, block_noise, iter_blocks
from .transfer import StepFunction, adjoint_apply

__all__ = [
    "PathEnsemble",
    "VolterraKernel",
    "BridgeSpec",
    "SeriesExpansion",
    "CovarianceEstimate",
    "SERIES_BASES",
    "simulate",
    "series_expand",
    "series_truncation_error",
    "integrated_truncation_error",
    "bridge_gram",
    "bridge_orthogonal",
    "path_functionals",
    "bridge_canonical",
    "simulate_bridge_canonical",
    "canonical_drift_kernel",
    "volterra_perturb",
    "langevin_kernel",
    "langevin_simulate_euler",
    "empirical_covariance",
    "save_ensemble",
    "load_ensemble",
]

GRAM_COND_LIMIT = 1e12
ORTHONORMAL_TOL = 1e-8
_GL_POINTS = 8


# ---------------------------------------------------------------- ensembles

@dataclass(frozen=True, eq=False)
class PathEnsemble:
    """``paths[p, i]`` is path ``p`` at ``grid.nodes[i]``."""

    grid: TimeGrid
    paths: np.ndarray
    seed: int | None
    provenance: str
    stream: int = 0

    def __post_init__(self):
        a = np.array(self.paths, dtype=float)
        if a.ndim != 2 or a.shape[1] != self.grid.size:
            raise InvalidArgumentError("path matrix must be (n_paths, grid.size)")
        a.setflags(write=False)
        object.__setattr__(self, "paths", a)

    @property
    def n_paths(self) -> int:
        return self.paths.shape[0]

    def at(self, t: float) -> np.ndarray:
        return self.paths[:, self.grid.index_of(t)]

    def manifest(self) -> dict:
        return {
            "seed": self.seed,
            "stream": self.stream,
            "n_paths": self.n_paths,
            "kernel_provenance": self.provenance,
            "grid": self.grid.to_dict(),
        }


def simulate(kernel: FredholmKernel, n_paths: int, seed: int, stream: int = 0) -> PathEnsemble:
    """Draw ``n_paths`` paths of the process represented by ``kernel``.

    Path ``p`` uses the noise vector with index ``p`` of ``(seed, stream)``,
    so any subset of paths can be regenerated alone.
    """
    n_paths = int(n_paths)
    if n_paths <= 0:
        raise InvalidArgumentError("n_paths must be positive")
    A = kernel.noise_map().T
    out = np.empty((n_paths, kernel.grid.size))
    for b, lo, hi in iter_blocks(n_paths):
        out[lo:hi] = block_noise(seed, stream, b, kernel.n_noise)[: hi - lo] @ A
    return PathEnsemble(kernel.grid, out, int(seed), kernel.provenance, int(stream))


def save_ensemble(ensemble: PathEnsemble, path, extra: dict | None = None) -> tuple[Path, Path]:
    """CSV of paths (one row per path, header of node times) plus a JSON manifest."""
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([repr(float(t)) for t in ensemble.grid.nodes])
        for row in ensemble.paths:
            w.writerow([repr(float(x)) for x in row])
    manifest = ensemble.manifest()
    if extra:
        manifest.update(extra)
    mpath = path.with_suffix(".json")
    mpath.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path, mpath


def load_ensemble(path) -> PathEnsemble:
    path = Path(path)
    manifest = json.loads(path.with_suffix(".json").read_text())
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r]
    grid = TimeGrid.from_dict(manifest["grid"])
    paths = np.array([[float(x) for x in r] for r in rows[1:]]).reshape(-1, grid.size)
    return PathEnsemble(grid, paths, manifest.get("seed"), manifest["kernel_provenance"],
                        manifest.get("stream", 0))


@dataclass(frozen=True)
class CovarianceEstimate:
    times: np.ndarray
    covariance: np.ndarray
    std_error: np.ndarray
    n_paths: int


def empirical_covariance(ensemble: PathEnsemble, times: Sequence[float] | None = None) -> CovarianceEstimate:
    """Unbiased sample covariance at ``times`` (all nodes by default) and its standard errors.

    The standard error of entry ``(i, j)`` is the delta-method estimate
    ``sqrt(Var[(X_i - m_i)(X_j - m_j)] / N)``.
    """
    N = ensemble.n_paths
    if N < 2:
        raise InvalidArgumentError("need at least two paths for a covariance")
    grid = ensemble.grid
    if times is None:
        idx = np.arange(grid.size)
    else:
        idx = np.array([grid.index_of(t) for t in times], dtype=int)
    X = ensemble.paths[:, idx]
    D = X - X.mean(axis=0)
    cov = D.T @ D / (N - 1)
    prod_sq = (D * D).T @ (D * D) / N
    biased = cov * (N - 1) / N
    se = np.sqrt(np.maximum(prod_sq - biased**2, 0.0) / N)
    return CovarianceEstimate(grid.nodes[idx].copy(), cov, se, N)


# ------------------------------------------------------------------- series

SERIES_BASES = ("mercer-eigen", "trigonometric", "haar")


@dataclass(frozen=True, eq=False)
class SeriesExpansion:
    """Expansion functions ``a_j(t_i)`` of a kernel in an orthonormal basis.

    ``table`` has shape ``(m, grid.size)``; ``basis_values`` is the basis
    tabulated on the kernel's noise points, shape ``(m, n_noise)``.
    """

    grid: TimeGrid
    basis: str
    table: np.ndarray
    basis_values: np.ndarray = field(repr=False)

    @property
    def m(self) -> int:
        return self.table.shape[0]

    def covariance(self) -> np.ndarray:
        return self.table.T @ self.table


def _trig_basis(points, T, m):
    k = np.arange(m)[:, None]
    out = np.sqrt(2.0 / T) * np.cos(k * np.pi * points[None, :] / T)
    if m:
        out[0] = 1.0 / np.sqrt(T)
    return out


def _haar_basis(points, T, m):
    x = np.asarray(points) / T
    rows = []
    if m:
        rows.append(np.full_like(x, 1.0 / np.sqrt(T)))
    level = 0
    while len(rows) < m:
        for k in range(2**level):
            if len(rows) == m:
                break
            lo, mid, hi = k / 2**level, (k + 0.5) / 2**level, (k + 1) / 2**level
            v = np.where((x >= lo) & (x < mid), 1.0, 0.0) - np.where((x >= mid) & (x < hi), 1.0, 0.0)
            rows.append(v * 2 ** (level / 2) / np.sqrt(T))
        level += 1
    return np.array(rows).reshape(m, len(x))


def _svd_basis(kernel: FredholmKernel, m: int):
    sw_t = np.sqrt(kernel.grid.weights)
    sw_u = np.sqrt(kernel.noise_weights)
    B = sw_t[:, None] * kernel.matrix * sw_u[None, :]
    U, S, Vt = np.linalg.svd(B, full_matrices=False)
    idx = np.argmax(np.abs(U[:, :m]), axis=0)
    signs = np.sign(U[idx, np.arange(m)])
    signs[signs == 0] = 1.0
    return (Vt[:m] * signs[:, None]) / sw_u[None, :]


def series_expand(kernel: FredholmKernel, basis: str = "mercer-eigen", m: int | None = None) -> SeriesExpansion:
    """Expand ``K(t, .)`` in an orthonormal basis of ``L^2([0, T])``.

    ``a_j(t_i) = sum_k w_k phi_j(u_k) K(t_i, u_k)``. The ``mercer-eigen``
    basis consists of the right singular functions of the kernel, so
    ``a_j = sqrt(lambda_j) e_j`` is the Karhunen-Loeve expansion.
    ``m=None`` asks for as many functions as there are noise points.

    Raises
    ------
    InvalidBasisError
        If the requested basis is not orthonormal to 1e-8 under the noise
        quadrature.
    """
    if basis not in SERIES_BASES:
        raise InvalidArgumentError(f"unknown basis {basis!r}; choose from {SERIES_BASES}")
    n_noise = kernel.n_noise
    if m is None:
        m = min(n_noise, kernel.grid.size) if basis == "mercer-eigen" else n_noise
    m = int(m)
    if m < 0 or m > n_noise:
        raise InvalidArgumentError(f"rank must lie in [0, {n_noise}], got {m}")
    T = kernel.grid.T
    u = kernel.noise_points
    if basis == "mercer-eigen":
        if m > min(n_noise, kernel.grid.size):
            raise InvalidArgumentError("mercer-eigen rank exceeds the kernel's singular values")
        Phi = _svd_basis(kernel, m) if m else np.zeros((0, n_noise))
    elif basis == "trigonometric":
        Phi = _trig_basis(u, T, m)
    else:
        Phi = _haar_basis(u, T, m)
    if m:
        G = (Phi * kernel.noise_weights) @ Phi.T
        err = float(np.max(np.abs(G - np.eye(m))))
        if err > ORTHONORMAL_TOL:
            raise InvalidBasisError(
                f"{basis} basis is not orthonormal under this quadrature (error {err:.2e})"
            )
    table = Phi @ (kernel.matrix * kernel.noise_weights).T
    return SeriesExpansion(kernel.grid, basis, table, Phi)


def series_truncation_error(expansion: SeriesExpansion, model: CovarianceModel, t=None):
    """``R(t, t) - sum_j a_j(t)^2`` at node ``t`` (every node when ``t`` is None)."""
    grid = expansion.grid
    if t is None:
        idx = np.arange(grid.size)
    else:
        idx = np.atleast_1d([grid.index_of(x) for x in np.atleast_1d(t)])
    nodes = grid.nodes[idx]
    err = evaluate(model, nodes, nodes) - np.sum(expansion.table[:, idx] ** 2, axis=0)
    if t is not None and np.ndim(t) == 0:
        return float(err[0])
    return err


def integrated_truncation_error(expansion: SeriesExpansion, model: CovarianceModel) -> float:
    """Quadrature of the truncation error over ``[0, T]``."""
    return float(np.dot(expansion.grid.weights, series_truncation_error(expansion, model)))


# ------------------------------------------------------------------ bridges

@dataclass(frozen=True, eq=False)
class BridgeSpec:
    """Conditioning functionals of a generalized bridge.

    ``transferred[i]`` is ``K* g_i`` on the noise points, ``gram`` the matrix
    of ``<g_i, g_j>`` and ``running_gram[k]`` the same pairing restricted to
    ``[t_k, T]`` in the noise variable.
    """

    kernel: FredholmKernel = field(repr=False)
    functionals: tuple
    gram: np.ndarray
    transferred: np.ndarray
    running_gram: np.ndarray = field(repr=False)

    @property
    def N(self) -> int:
        return len(self.functionals)


def _as_functionals(g) -> tuple:
    if isinstance(g, StepFunction):
        g = [g]
    g = tuple(g)
    if not g:
        raise InvalidArgumentError("need at least one conditioning functional")
    return g


def bridge_gram(kernel: FredholmKernel, g) -> BridgeSpec:
    """Gram data of the conditioning functionals ``g`` (step functions on the grid).

    Raises
    ------
    DependentFunctionalsError
        If the Gram matrix has condition number above 1e12 (or is zero).
    """
    g = _as_functionals(g)
    Gs = np.array([adjoint_apply(kernel, gi) for gi in g])
    gram = (Gs * kernel.noise_weights) @ Gs.T
    gram = 0.5 * (gram + gram.T)
    ev = np.linalg.eigvalsh(gram)
    if ev[-1] <= 0 or ev[0] <= ev[-1] / GRAM_COND_LIMIT:
        raise DependentFunctionalsError(
            f"conditioning functionals are degenerate (Gram eigenvalues {ev[0]:.3e} .. {ev[-1]:.3e})"
        )
    prods = Gs[:, None, :] * Gs[None, :, :]
    running = np.moveaxis(kernel.tail_integral(prods), -1, 0)
    return BridgeSpec(kernel, g, gram, Gs, running)


def path_functionals(spec: BridgeSpec, grid: TimeGrid, paths: np.ndarray) -> np.ndarray:
    """``int g_i dX`` for every path, read off the path values at the breakpoints."""
    # g_i = sum_k a_k 1_{t_k} gives sum_k a_k X(t_k)
    out = np.zeros(paths.shape[:-1] + (spec.N,))
    for i, gi in enumerate(spec.functionals):
        for t, a in gi.indicator_terms():
            if grid.contains(t):
                out[..., i] += a * paths[..., grid.index_of(t)]
            elif abs(t) > 1e-12 * grid.T:
                raise InvalidArgumentError(f"breakpoint {t!r} is not a grid node")
    return out


def bridge_orthogonal(kernel: FredholmKernel, spec: BridgeSpec, ensemble: PathEnsemble) -> PathEnsemble:
    """``X^g_t = X_t - <1_t, g>^T Gram^{-1} int g dX`` path by path."""
    if not ensemble.grid.same_as(kernel.grid) or spec.kernel is not kernel and not spec.kernel.grid.same_as(kernel.grid):
        raise InvalidArgumentError("ensemble, bridge spec and kernel must share a grid")
    cross = (kernel.matrix * kernel.noise_weights) @ spec.transferred.T  # <1_{t_i}, g_j>
    coef = np.linalg.solve(spec.gram, path_functionals(spec, kernel.grid, ensemble.paths).T)
    bridged = ensemble.paths - (cross @ coef).T
    return PathEnsemble(kernel.grid, bridged, ensemble.seed, f"{ensemble.provenance}|bridge-orthogonal",
                        ensemble.stream)


def _canonical_noise(spec: BridgeSpec, xi: np.ndarray, strict: bool = True) -> np.ndarray:
    """Conditioned white-noise increments, drawn one noise cell at a time."""
    kernel = spec.kernel
    w = kernel.noise_weights
    Gs = spec.transferred  # (N, n_noise)
    N, n = Gs.shape
    outer = (Gs.T[:, :, None] * Gs.T[:, None, :]) * w[:, None, None]
    G_incl = np.cumsum(outer[::-1], axis=0)[::-1]  # sum over j >= k
    scale = float(np.max(np.abs(spec.gram)))
    dW = np.empty_like(xi)
    Y = np.zeros(xi.shape[:-1] + (N,))
    for k in range(n):
        Gk = G_incl[k]
        ev = np.linalg.eigvalsh(Gk)
        if strict and k <= n - N and ev[0] <= max(ev[-1], scale * 1e-300) / GRAM_COND_LIMIT:
            raise DependentFunctionalsError(
                f"running Gram is singular at noise point {kernel.noise_points[k]:.6g}"
            )
        gk = Gs[:, k]
        mk = np.linalg.pinv(Gk, rcond=1e-13, hermitian=True) @ gk
        mean = -w[k] * (Y @ mk)
        var = max(w[k] - w[k] ** 2 * float(gk @ mk), 0.0)
        dW[..., k] = mean + math.sqrt(var) * xi[..., k]
        Y = Y + dW[..., k][..., None] * gk
    return dW


def bridge_canonical(kernel: FredholmKernel, spec: BridgeSpec, noise, *, strict: bool = True):
    """Canonical-type bridge path(s) driven by ``noise``.

    The white noise is conditioned sequentially: at each noise cell the
    increment is drawn from its law given the increments so far and the
    constraint that every ``int g_i dX`` vanishes. The resulting noise is
    adapted, its last cell closes the constraint exactly, and the path is
    ``K`` applied to it. In the continuum limit the drift removed from the
    noise is ``g*(s)^T int_0^s G(u)^{-1} g*(u) dW_u`` with ``G`` the running
    Gram matrix (see :func:`canonical_drift_kernel`).

    ``noise`` is a :class:`~fredholm.rng.NoiseVector` or an array of shape
    ``(..., n_noise)``; the return value has shape ``(..., grid.size)``.

    With ``strict`` (the default) a running Gram matrix that turns singular
    before the last ``N`` noise cells raises
    :class:`~fredholm.errors.DependentFunctionalsError`. Step functions
    conditioned through a cell kernel become collinear once their last
    breakpoint is passed; ``strict=False`` then conditions on the remaining
    span with a pseudo-inverse, which still gives the exact discrete law.
    """
    if spec.kernel is not kernel and not spec.kernel.grid.same_as(kernel.grid):
        raise InvalidArgumentError("bridge spec was built for another kernel")
    xi = np.asarray(noise.values if isinstance(noise, NoiseVector) else noise, dtype=float)
    if xi.shape[-1] != kernel.n_noise:
        raise InvalidArgumentError("noise length does not match the kernel")
    dW = _canonical_noise(spec, xi, strict)
    return dW @ kernel.matrix.T


def simulate_bridge_canonical(kernel: FredholmKernel, spec: BridgeSpec, n_paths: int, seed: int,
                              stream: int = 0, *, strict: bool = True) -> PathEnsemble:
    """Ensemble of canonical-type bridge paths from the reproducible noise."""
    n_paths = int(n_paths)
    if n_paths <= 0:
        raise InvalidArgumentError("n_paths must be positive")
    out = np.empty((n_paths, kernel.grid.size))
    for b, lo, hi in iter_blocks(n_paths):
        xi = block_noise(seed, stream, b, kernel.n_noise)[: hi - lo]
        out[lo:hi] = bridge_canonical(kernel, spec, xi, strict=strict)
    return PathEnsemble(kernel.grid, out, int(seed), f"{kernel.provenance}|bridge-canonical", int(stream))


def canonical_drift_kernel(spec: BridgeSpec) -> np.ndarray:
    """``D[i, k] = g*(s_i)^T G(s_k)^{-1} g*(s_k)`` for ``k <= i`` on the noise points.

    ``G(s)`` is the running Gram matrix ``int_s^T g* g*^T``; for Brownian
    motion conditioned on ``X_T = 0`` this is ``1 / (T - s_k)``. Columns where
    ``G`` is singular are left as NaN; for nodal kernels this is the last
    noise point, cell kernels use ``G`` at the left end of each cell.
    """
    kernel = spec.kernel
    w = kernel.noise_weights
    Gs = spec.transferred
    N, n = Gs.shape
    if kernel.noise_basis == "cell":
        run = spec.running_gram[:-1]  # running Gram at the left end of each cell
    else:
        run = spec.running_gram
    D = np.full((n, n), np.nan)
    for k in range(n):
        ev = np.linalg.eigvalsh(run[k])
        if ev[0] <= 0 or ev[0] <= ev[-1] / GRAM_COND_LIMIT:
            continue
        v = np.linalg.solve(run[k], Gs[:, k])
        D[k:, k] = Gs[:, k:].T @ v
    D[np.triu_indices(n, 1)] = 0.0
    return D


# -------------------------------------------------------- kernel transforms

@dataclass(frozen=True, eq=False)
class VolterraKernel:
    """Kernel ``l(s, u)`` supported on ``u <= s``.

    ``func`` is evaluated only where ``u <= s``; values elsewhere are zero.
    """

    func: Callable = field(repr=False)
    name: str = "volterra"

    @classmethod
    def exponential(cls, theta: float) -> "VolterraKernel":
        """``theta exp(-theta (s - u))`` on ``u <= s``."""
        theta = float(theta)
        return cls(lambda s, u: theta * np.exp(-theta * (s - u)), f"exponential(theta={theta!r})")

    @classmethod
    def zero(cls) -> "VolterraKernel":
        return cls(lambda s, u: np.zeros(np.broadcast(s, u).shape), "zero")

    def __call__(self, s, u):
        s, u = np.broadcast_arrays(np.asarray(s, float), np.asarray(u, float))
        out = np.zeros(s.shape)
        mask = u <= s
        if np.any(mask):
            out[mask] = np.asarray(self.func(s[mask], u[mask]), dtype=float)
        return out

    def tabulate(self, s_points, u_points) -> np.ndarray:
        """``l(s_i, u_j)``; lower triangular when both point sets coincide."""
        s = np.asarray(s_points, float)[:, None]
        u = np.asarray(u_points, float)[None, :]
        return self(s, u)


def _perturbation_matrix(kernel: FredholmKernel, ell: VolterraKernel) -> np.ndarray:
    """``A[q, j] = int_{u_j}^T phi_q(v) l(v, u_j) dv``.

    ``phi_q`` is the interpolation basis of the kernel's noise argument:
    indicator of cell ``q`` for cell kernels, hat function at node ``q`` for
    nodal kernels. Integrals use Gauss-Legendre points inside every cell.
    """
    grid = kernel.grid
    if not grid.has_endpoints:
        raise InvalidArgumentError("Volterra perturbation needs a grid that contains 0 and T")
    x, wx = np.polynomial.legendre.leggauss(_GL_POINTS)
    x = 0.5 * (x + 1.0)
    wx = 0.5 * wx
    b = grid.nodes
    u = kernel.noise_points
    n_cells = grid.n
    cells = np.arange(n_cells)
    lo = np.broadcast_to(b[:-1][:, None], (n_cells, len(u))).copy()  # [cell, j]
    hi = np.broadcast_to(b[1:][:, None], (n_cells, len(u)))
    lo = np.maximum(lo, u[None, :])
    active = hi > lo
    length = np.where(active, hi - lo, 0.0)
    v = lo[..., None] + length[..., None] * x  # [cell, j, gauss]
    vals = ell(v, np.broadcast_to(u[None, :, None], v.shape)) * np.where(active, 1.0, 0.0)[..., None]
    if not np.all(np.isfinite(vals)):
        raise InvalidArgumentError("Volterra kernel is not finite on the grid")
    if kernel.noise_basis == "cell":
        return np.einsum("cjg,g->cj", vals, wx) * length
    h = np.diff(b)
    frac = (v - b[:-1][:, None, None]) / h[:, None, None]
    left = np.einsum("cjg,g->cj", vals * (1.0 - frac), wx) * length
    right = np.einsum("cjg,g->cj", vals * frac, wx) * length
    A = np.zeros((grid.size, len(u)))
    A[cells] += left
    A[cells + 1] += right
    return A


def volterra_perturb(kernel: FredholmKernel, ell: VolterraKernel) -> FredholmKernel:
    """``K~(t, s) = K(t, s) - int_s^T K(t, u) l(u, s) du``.

    ``K(t, .)`` is interpolated in its noise argument (piecewise constant on
    cells or piecewise linear between nodes) and integrated exactly against
    the Gauss-Legendre approximation of ``l``.
    """
    if not isinstance(ell, VolterraKernel):
        raise InvalidArgumentError("ell must be a VolterraKernel")
    A = _perturbation_matrix(kernel, ell)
    K = kernel.matrix - kernel.matrix @ A
    return kernel.with_matrix(K, f"{kernel.provenance}|volterra:{ell.name}")


def _langevin_weights(grid: TimeGrid, theta: float, basis: str) -> np.ndarray:
    t = grid.nodes
    h = np.diff(t)
    i = np.arange(grid.size)[:, None]
    k = np.arange(grid.n)[None, :]
    mask = k < i
    if basis == "cell":
        lag = t[:, None] - (0.5 * (t[:-1] + t[1:]))[None, :]
        E = np.exp(-theta * np.where(mask, lag, 0.0))
    else:
        # exact for K linear on each cell: dK/h * int exp(-theta (t - s)) ds
        lag = t[:, None] - t[1:][None, :]
        th = theta * h
        factor = np.where(th > 0, -np.expm1(-th) / np.where(th > 0, th, 1.0), 1.0)
        E = np.exp(-theta * np.where(mask, lag, 0.0)) * factor[None, :]
    return np.where(mask, E, 0.0)


def langevin_kernel(kernel: FredholmKernel, theta: float) -> FredholmKernel:
    """Kernel of the Langevin solution ``dY = -theta Y dt + dX``, ``Y_0 = 0``.

    ``K^theta(t, u) = K(t, u) - theta int_0^t exp(-theta (t - s)) K(s, u) ds``,
    evaluated after integrating by parts as
    ``exp(-theta t) K(0, u) + int_0^t exp(-theta (t - s)) K(ds, u)``.
    The Stieltjes integral in the first argument is exact for kernels that
    jump at cell midpoints (cell kernels) or are linear between nodes.
    """
    theta = float(theta)
    if not theta > 0 or not np.isfinite(theta):
        raise InvalidArgumentError(f"theta must be positive, got {theta!r}")
    grid = kernel.grid
    if not grid.has_endpoints:
        raise InvalidArgumentError("the Langevin kernel needs a grid that contains 0 and T")
    K = kernel.matrix
    E = _langevin_weights(grid, theta, kernel.noise_basis)
    Ktheta = np.exp(-theta * grid.nodes)[:, None] * K[0][None, :] + E @ np.diff(K, axis=0)
    return kernel.with_matrix(Ktheta, f"{kernel.provenance}|langevin(theta={theta!r})")


def langevin_simulate_euler(driver, theta: float, n_paths: int, seed: int, *, grid: TimeGrid | None = None,
                            stream: int = 0) -> PathEnsemble:
    """Explicit Euler for ``Y_t = -theta int_0^t Y ds + X_t`` on the driver's grid.

    ``driver`` is a :class:`FredholmKernel` or a covariance model (then
    ``grid`` is required and the model is factorized first). The driver paths
    come from :func:`simulate` with the same ``(seed, stream)``, so the Euler
    paths are paired with any other simulation from that kernel.
    """
    theta = float(theta)
    if theta < 0:
        raise InvalidArgumentError("theta must be non-negative")
    if isinstance(driver, CovarianceModel):
        if grid is None:
            raise InvalidArgumentError("a grid is needed to factorize the driving model")
        driver = factorize(driver, grid)
    X = simulate(driver, n_paths, seed, stream).paths
    if not driver.grid.has_endpoints:
        raise InvalidArgumentError("Euler stepping needs a grid that contains 0 and T")
    dt = np.diff(driver.grid.nodes)
    dX = np.diff(X, axis=1)
    Y = np.empty_like(X)
    Y[:, 0] = 0.0
    for k in range(len(dt)):
        Y[:, k + 1] = Y[:, k] - theta * Y[:, k] * dt[k] + dX[:, k]
    return PathEnsemble(driver.grid, Y, int(seed), f"{driver.provenance}|euler(theta={theta!r})", int(stream))
