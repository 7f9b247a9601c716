"""Command-line front end.

Every command writes CSV data and a JSON manifest into the output directory
and exits with 0 (pass), 1 (usage), 2 (precondition failed) or 3 (a check
failed). Settings come from built-in defaults, then an optional flat
``key = value`` file given with ``--config``, then explicit flags.
"""

from __future__ import annotations

import argparse
import ast
import csv
import hashlib
import json
import math
import os
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from . import __version__
from .chaos import ItoFunction, TestVariable, ito_duality_check, product_formula_check, MAX_ORDER
from .covariance import check_psd, evaluate, gram, trace
from .errors import FredholmError, InvalidArgumentError, TraceConditionError
from .factorize import (
    DEFAULT_CLIP_TOL,
    DEFAULT_TRACE_FRACTION,
    KNOWN_KERNELS,
    factorization_residual,
    factorize,
    known_kernel,
    mercer_decompose,
    build_fredholm_kernel,
    save_kernel,
    unitary_equivalence_check,
)
from .modelspec import parse_model_spec
from .numerics import make_grid
from .processes import (
    VolterraKernel,
    bridge_gram,
    bridge_orthogonal,
    empirical_covariance,
    integrated_truncation_error,
    langevin_kernel,
    langevin_simulate_euler,
    path_functionals,
    save_ensemble,
    series_expand,
    series_truncation_error,
    simulate,
    simulate_bridge_canonical,
    volterra_perturb,
)
from .rng import noise_matrix
from .transfer import StepFunction

EXIT_PASS, EXIT_USAGE, EXIT_PRECONDITION, EXIT_CHECK_FAILED = 0, 1, 2, 3

KERNEL_ALIASES = {
    "indicator": "brownian-motion-indicator",
    "bb-orthogonal": "brownian-bridge-orthogonal",
    "bb-canonical": "brownian-bridge-canonical-volterra",
}


# ------------------------------------------------------------------ options

@dataclass(frozen=True)
class Option:
    name: str
    type: type
    default: object
    help: str


def _common(n_default: int) -> list[Option]:
    return [
        Option("model", str, None, "model spec: bm, bb, ou[:theta=,sigma=], fbm[:H=], "
               "rank-one:f=<expr>, truncated-series[:n=], csv:<path>"),
        Option("T", float, 1.0, "horizon"),
        Option("n", int, n_default, "number of grid intervals"),
        Option("rule", str, "trapezoid", "quadrature rule (trapezoid or gauss-legendre)"),
        Option("seed", int, 0, "random seed"),
    ]


def _kernel_opt(default="mercer") -> Option:
    return Option("kernel", str, default,
                  "mercer, or a closed-form kernel: indicator, bb-orthogonal, bb-canonical")


COMMANDS: dict[str, tuple[str, list[Option]]] = {
    "factorize": ("Mercer square-root kernel and its diagnostics", _common(256) + [
        Option("trace_fraction", float, DEFAULT_TRACE_FRACTION, "captured trace target"),
        Option("clip_tol", float, DEFAULT_CLIP_TOL, "relative eigenvalue floor"),
        Option("residual_tol", float, 1e-10, "max allowed factorization residual"),
    ]),
    "simulate": ("sample paths and compare their covariance with the model", _common(128) + [
        _kernel_opt(),
        Option("paths", int, 20000, "number of paths"),
        Option("check_times", str, "", "comma-separated nodes for the covariance check (default: 5 nodes)"),
        Option("sigmas", float, 3.5, "tolerance in standard errors"),
        Option("save_paths", bool, False, "also write every path"),
    ]),
    "bridge": ("orthogonal and canonical-type bridges", _common(64) + [
        _kernel_opt(),
        Option("g", str, "const", "conditioning functionals: const, ind:<t>, interval:<a>:<b>[:<c>], comma separated"),
        Option("method", str, "both", "orthogonal, canonical or both"),
        Option("paths", int, 100000, "number of paths per method"),
        Option("check_times", str, "", "nodes for the covariance tables (default: 5 nodes)"),
        Option("sigmas", float, 3.5, "tolerance in standard errors"),
        Option("constraint_tol", float, 1e-10, "max |int g dX| per orthogonal-bridge path"),
        Option("canonical_constraint_tol", float, 1e-8, "max |int g dX| per canonical-bridge path"),
    ]),
    "langevin": ("Langevin kernel simulation against explicit Euler", _common(256) + [
        _kernel_opt(),
        Option("theta", float, 1.0, "mean reversion"),
        Option("paths", int, 20000, "number of paths"),
        Option("check_times", str, "", "nodes for the variance table (default: 5 nodes)"),
        Option("sigmas", float, 3.5, "tolerance in standard errors"),
    ]),
    "equiv": ("Volterra perturbation with an exponential kernel", _common(256) + [
        _kernel_opt("indicator"),
        Option("theta", float, 1.0, "rate of l(s, u) = theta exp(-theta (s - u))"),
        Option("tol", float, 1e-6, "max |perturbed - Langevin| kernel difference"),
        Option("equivalence_tol", float, 1e-8, "covariance tolerance for the unitary equivalence test"),
    ]),
    "kl": ("series expansion and truncation errors", _common(256) + [
        _kernel_opt(),
        Option("basis", str, "mercer-eigen", "mercer-eigen, trigonometric or haar"),
        Option("m", str, "1,5,10", "comma-separated ranks"),
    ]),
    "ito-check": ("Monte Carlo duality check of the Ito formula", _common(64) + [
        _kernel_opt(),
        Option("f", str, "x2", "x<k> or poly:<c0>,<c1>,..."),
        Option("t", float, 0.5, "time of the Ito formula"),
        Option("G", str, "xT2", "test variable: xT<k> or a polynomial in X(<time>)"),
        Option("paths", int, 1000000, "number of paths"),
        Option("sigmas", float, 3.5, "tolerance in standard errors"),
    ]),
    "chaos-check": ("product formula for multiple Wiener integrals", _common(64) + [
        _kernel_opt(),
        Option("f", str, "ind:0.5", "first step function"),
        Option("g", str, "ind:1", "second step function"),
        Option("max_order", int, MAX_ORDER, "largest p + q"),
        Option("draws", int, 1000, "noise draws"),
        Option("tol", float, 1e-10, "max per-draw deviation"),
    ]),
}


def _parse_bool(text: str) -> bool:
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise InvalidArgumentError(f"not a boolean: {text!r}")


def _coerce(opt: Option, value):
    if value is None or isinstance(value, opt.type) and not (opt.type is int and isinstance(value, bool)):
        return value
    try:
        if opt.type is bool:
            return _parse_bool(value)
        return opt.type(value)
    except (TypeError, ValueError):
        raise InvalidArgumentError(f"{opt.name}: cannot read {value!r} as {opt.type.__name__}") from None


def _format(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return "" if value is None else str(value)


@dataclass(frozen=True)
class RunConfig:
    """Fully resolved settings of one command."""

    command: str
    values: dict

    @classmethod
    def resolve(cls, command: str, file_values: dict | None = None, cli_values: dict | None = None) -> "RunConfig":
        opts = {o.name: o for o in COMMANDS[command][1]}
        values = {name: o.default for name, o in opts.items()}
        for source in (file_values or {}, cli_values or {}):
            for key, raw in source.items():
                key = key.replace("-", "_")
                if key not in opts:
                    raise InvalidArgumentError(f"unknown setting {key!r} for {command}")
                values[key] = _coerce(opts[key], raw)
        return cls(command, values)

    def canonical(self) -> str:
        lines = [f"command = {self.command}"]
        lines += [f"{k} = {_format(self.values[k])}" for k in sorted(self.values)]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_canonical(cls, text: str) -> "RunConfig":
        values = read_config_text(text)
        command = values.pop("command", None)
        if command not in COMMANDS:
            raise InvalidArgumentError(f"unknown command {command!r}")
        opts = {o.name: o for o in COMMANDS[command][1]}
        for k, v in list(values.items()):
            if v == "" and k in opts and opts[k].default is None:
                values[k] = None
        return cls.resolve(command, values)

    @property
    def hash(self) -> str:
        return hashlib.sha256(self.canonical().encode()).hexdigest()

    def __getattr__(self, item):
        try:
            return self.__dict__["values"][item]
        except KeyError:
            raise AttributeError(item) from None


def read_config_text(text: str) -> dict:
    """Flat ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, eq, value = line.partition("=")
        if not eq:
            raise InvalidArgumentError(f"config line {lineno} is not key = value")
        out[key.strip().replace("-", "_")] = value.strip()
    return out


# ----------------------------------------------------------------- parsing

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="fredholm", description="Square-root kernels, simulation and chaos checks for Gaussian processes")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    for name, (help_text, opts) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text, description=help_text)
        p.add_argument("--config", default=argparse.SUPPRESS, help="flat key = value settings file")
        p.add_argument("--out", default=argparse.SUPPRESS,
                       help="output directory (env FREDHOLM_OUT_DIR, default ./fredholm-out)")
        p.add_argument("--threads", type=int, default=argparse.SUPPRESS,
                       help="worker threads (env FREDHOLM_THREADS, default 1)")
        for o in opts:
            flag = "--" + o.name.replace("_", "-")
            default_text = _format(o.default) or "none"
            if o.type is bool:
                p.add_argument(flag, dest=o.name, nargs="?", const="true", default=argparse.SUPPRESS,
                               help=f"{o.help} (default: {default_text})")
            else:
                p.add_argument(flag, dest=o.name, type=str, default=argparse.SUPPRESS,
                               help=f"{o.help} (default: {default_text})")
    return parser


# ---------------------------------------------------------------- helpers

def _step_function(text: str, T: float) -> StepFunction:
    kind, _, rest = text.strip().partition(":")
    try:
        args = [float(x) for x in rest.split(":")] if rest else []
    except ValueError:
        raise InvalidArgumentError(f"bad step function {text!r}") from None
    if kind == "const" and len(args) <= 1:
        return StepFunction.constant(args[0] if args else 1.0, T)
    if kind == "ind" and len(args) == 1:
        return StepFunction.indicator(args[0])
    if kind == "interval" and len(args) in (2, 3):
        return StepFunction.interval(*args)
    raise InvalidArgumentError(f"bad step function {text!r}; use const, ind:<t> or interval:<a>:<b>[:<c>]")


def _ito_function(text: str) -> ItoFunction:
    t = text.strip().lower()
    if t.startswith("poly:"):
        try:
            coeffs = [float(c) for c in t[5:].split(",")]
        except ValueError:
            raise InvalidArgumentError(f"bad polynomial {text!r}") from None
        return ItoFunction.polynomial(coeffs, name=text)
    if t.startswith("x") and t[1:].isdigit():
        return ItoFunction.monomial(int(t[1:]))
    raise InvalidArgumentError(f"bad function {text!r}; use x<k> or poly:<c0>,<c1>,...")


def _poly_mul(a: dict, b: dict) -> dict:
    out: dict = {}
    for ka, ca in a.items():
        for kb, cb in b.items():
            key = tuple(sorted(dict(_merge(ka, kb)).items()))
            out[key] = out.get(key, 0.0) + ca * cb
    return out


def _merge(ka, kb):
    d = dict(ka)
    for t, e in kb:
        d[t] = d.get(t, 0) + e
    return d.items()


def _test_variable(text: str, T: float) -> TestVariable:
    """``xT<k>`` or a polynomial such as ``X(0.25)*X(1) + 0.5*X(0.25)**2``."""
    s = text.strip()
    if s.lower().startswith("xt") and s[2:].isdigit():
        return TestVariable.power(T, int(s[2:]))
    try:
        tree = ast.parse(s.replace("^", "**"), mode="eval").body
    except SyntaxError:
        raise InvalidArgumentError(f"cannot parse test variable {text!r}") from None

    def walk(node) -> dict:
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
            return {(): float(node.value)}
        if (isinstance(node, ast.Call) and isinstance(node.func, ast.Name) and node.func.id == "X"
                and len(node.args) == 1 and isinstance(node.args[0], ast.Constant)):
            return {((float(node.args[0].value), 1),): 1.0}
        if isinstance(node, ast.UnaryOp) and isinstance(node.op, ast.USub):
            return {k: -v for k, v in walk(node.operand).items()}
        if isinstance(node, ast.BinOp):
            if isinstance(node.op, (ast.Add, ast.Sub)):
                a, b = walk(node.left), walk(node.right)
                sign = 1.0 if isinstance(node.op, ast.Add) else -1.0
                out = dict(a)
                for k, v in b.items():
                    out[k] = out.get(k, 0.0) + sign * v
                return out
            if isinstance(node.op, ast.Mult):
                return _poly_mul(walk(node.left), walk(node.right))
            if (isinstance(node.op, ast.Pow) and isinstance(node.right, ast.Constant)
                    and isinstance(node.right.value, int) and node.right.value >= 0):
                out = {(): 1.0}
                base = walk(node.left)
                for _ in range(node.right.value):
                    out = _poly_mul(out, base)
                return out
        raise InvalidArgumentError(f"unsupported construct in test variable {text!r}")

    poly = {k: v for k, v in walk(tree).items() if v != 0.0}
    anchors = sorted({t for k in poly for t, _ in k})
    if not anchors:
        raise InvalidArgumentError("test variable must involve X(t)")
    terms = []
    for k, c in sorted(poly.items()):
        d = dict(k)
        terms.append((c, tuple(d.get(a, 0) for a in anchors)))
    return TestVariable(tuple(anchors), tuple(terms))


def _times(cfg: RunConfig, grid, count: int = 5) -> list[float]:
    if cfg.check_times:
        try:
            ts = [float(x) for x in cfg.check_times.split(",")]
        except ValueError:
            raise InvalidArgumentError("check_times must be comma-separated numbers") from None
        return [float(grid.nodes[grid.index_of(t)]) for t in ts]
    idx = np.unique(np.linspace(0, grid.size - 1, count + 1).round().astype(int)[1:])
    return [float(grid.nodes[i]) for i in idx]


def _setup(cfg: RunConfig):
    if not cfg.model:
        raise _UsageError("a model is required (--model or model = ... in the config file)")
    model = parse_model_spec(cfg.model, cfg.T)
    grid = make_grid(model.T, cfg.n, cfg.rule)
    return model, grid


def _kernel(cfg: RunConfig, model, grid):
    name = KERNEL_ALIASES.get(cfg.kernel, cfg.kernel)
    if name == "mercer":
        return factorize(model, grid)
    if name not in KNOWN_KERNELS or name == "degenerate-rank-one":
        raise InvalidArgumentError(f"unknown kernel {cfg.kernel!r}")
    K = known_kernel(name, grid)
    res = factorization_residual(K, model)
    # the canonical bridge kernel converges at first order (about 0.26/n);
    # a kernel paired with the wrong model is off by O(1)
    if res.relative > 0.5 / grid.n:
        raise InvalidArgumentError(f"kernel {name} does not represent model {model.kind} "
                                   f"(relative residual {res.relative:.2e})")
    return K


class _UsageError(Exception):
    pass


def _write_table(path: Path, header: list[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_format(float(x)) if isinstance(x, (float, np.floating)) else
                        (_format(int(x)) if isinstance(x, (np.integer,)) else _format(x)) for x in row])


def _cov_rows(est, reference=None):
    rows = []
    for i, ti in enumerate(est.times):
        for j, tj in enumerate(est.times):
            row = [ti, tj, est.covariance[i, j], est.std_error[i, j]]
            if reference is not None:
                row.append(float(reference[i, j]))
            rows.append(row)
    return rows


def _z_ok(diff, se, sigmas, slack=0.0) -> bool:
    return bool(np.all(np.abs(diff) <= sigmas * se + slack + 1e-14))


# ---------------------------------------------------------------- commands

def cmd_factorize(cfg: RunConfig, out: Path) -> dict:
    model, grid = _setup(cfg)
    tr = trace(model, grid)
    if not tr.finite:
        raise TraceConditionError(
            "trace condition fails: int_0^T R(t, t) dt is not finite or does not settle "
            f"under refinement ({tr.value!r} -> {tr.refined_value!r})"
        )
    decomp = mercer_decompose(model, grid, cfg.trace_fraction, cfg.clip_tol)
    K = build_fredholm_kernel(decomp)
    psd = check_psd(gram(model, grid))
    res = factorization_residual(K, model)
    _, mpath = save_kernel(K, out / "kernel.csv")
    _write_table(out / "eigenvalues.csv", ["k", "eigenvalue"],
                 [[k + 1, float(v)] for k, v in enumerate(decomp.eigenvalues)])
    return {
        "passed": bool(res.absolute <= cfg.residual_tol),
        "tolerances": {"residual": cfg.residual_tol},
        "results": {
            "rank": decomp.rank,
            "trace": tr.value,
            "trace_refined": tr.refined_value,
            "captured_fraction": decomp.captured_fraction,
            "residual_abs": res.absolute,
            "residual_rel": res.relative,
            "psd": {"min_eigenvalue": psd.min_eigenvalue, "max_eigenvalue": psd.max_eigenvalue,
                    "passed": psd.passed},
        },
        "files": ["kernel.csv", mpath.name, "eigenvalues.csv"],
    }


def cmd_simulate(cfg: RunConfig, out: Path) -> dict:
    model, grid = _setup(cfg)
    K = _kernel(cfg, model, grid)
    ens = simulate(K, cfg.paths, cfg.seed)
    times = _times(cfg, grid)
    est = empirical_covariance(ens, times)
    ref = evaluate(model, np.array(times)[:, None], np.array(times)[None, :])
    passed = _z_ok(est.covariance - ref, est.std_error, cfg.sigmas)
    _write_table(out / "covariance.csv", ["t", "s", "empirical", "std_error", "model"], _cov_rows(est, ref))
    files = ["covariance.csv"]
    if cfg.save_paths:
        _, mp = save_ensemble(ens, out / "paths.csv")
        files += ["paths.csv", mp.name]
    return {"passed": passed, "tolerances": {"sigmas": cfg.sigmas},
            "results": {"kernel": K.provenance, "n_paths": cfg.paths}, "files": files}


def cmd_bridge(cfg: RunConfig, out: Path) -> dict:
    model, grid = _setup(cfg)
    if cfg.method not in ("orthogonal", "canonical", "both"):
        raise InvalidArgumentError("method must be orthogonal, canonical or both")
    K = _kernel(cfg, model, grid)
    gs = [_step_function(x, grid.T) for x in cfg.g.split(",")]
    spec = bridge_gram(K, gs)
    times = _times(cfg, grid)
    idx = [grid.index_of(t) for t in times]
    cross = (K.matrix * K.noise_weights) @ spec.transferred.T
    exact = K.covariance() - cross @ np.linalg.solve(spec.gram, cross.T)
    ref = exact[np.ix_(idx, idx)]
    results, files, passed = {}, [], True
    ests = {}
    if cfg.method in ("orthogonal", "both"):
        o = bridge_orthogonal(K, spec, simulate(K, cfg.paths, cfg.seed, stream=0))
        ests["orthogonal"] = empirical_covariance(o, times)
        worst = float(np.max(np.abs(path_functionals(spec, grid, o.paths))))
        results["orthogonal_constraint_max"] = worst
        passed &= worst <= cfg.constraint_tol
    if cfg.method in ("canonical", "both"):
        c = simulate_bridge_canonical(K, spec, cfg.paths, cfg.seed, stream=1)
        ests["canonical"] = empirical_covariance(c, times)
        worst = float(np.max(np.abs(path_functionals(spec, grid, c.paths))))
        results["canonical_constraint_max"] = worst
        passed &= worst <= cfg.canonical_constraint_tol
    for name, est in ests.items():
        ok = _z_ok(est.covariance - ref, est.std_error, cfg.sigmas)
        results[f"{name}_vs_conditional"] = ok
        passed &= ok
        _write_table(out / f"bridge_{name}.csv", ["t", "s", "empirical", "std_error", "conditional"],
                     _cov_rows(est, ref))
        files.append(f"bridge_{name}.csv")
    if len(ests) == 2:
        a, b = ests["orthogonal"], ests["canonical"]
        ok = _z_ok(a.covariance - b.covariance, np.hypot(a.std_error, b.std_error), cfg.sigmas)
        results["orthogonal_vs_canonical"] = ok
        passed &= ok
    return {"passed": bool(passed),
            "tolerances": {"sigmas": cfg.sigmas, "constraint": cfg.constraint_tol,
                           "canonical_constraint": cfg.canonical_constraint_tol},
            "results": results, "files": files}


def cmd_langevin(cfg: RunConfig, out: Path) -> dict:
    model, grid = _setup(cfg)
    K = _kernel(cfg, model, grid)
    Kt = langevin_kernel(K, cfg.theta)
    save_kernel(Kt, out / "langevin_kernel.csv")
    kern = simulate(Kt, cfg.paths, cfg.seed)
    euler = langevin_simulate_euler(K, cfg.theta, cfg.paths, cfg.seed)
    times = _times(cfg, grid)
    a = empirical_covariance(kern, times)
    b = empirical_covariance(euler, times)
    dt = float(np.max(np.diff(grid.nodes)))
    budget = cfg.theta * dt * float(np.max(evaluate(model, grid.nodes, grid.nodes)))
    va, vb = np.diag(a.covariance), np.diag(b.covariance)
    sa, sb = np.diag(a.std_error), np.diag(b.std_error)
    passed = _z_ok(va - vb, np.hypot(sa, sb), cfg.sigmas, budget)
    rows = [[t, va[i], sa[i], vb[i], sb[i]] for i, t in enumerate(times)]
    header = ["t", "kernel_var", "kernel_se", "euler_var", "euler_se"]
    results = {"euler_budget": budget}
    if model.kind == "brownian-motion":
        th = cfg.theta
        exact = -np.expm1(-2 * th * np.array(times)) / (2 * th)
        for r, e in zip(rows, exact):
            r.append(float(e))
        header.append("ou_closed_form")
        ok = _z_ok(va - exact, sa, cfg.sigmas)
        results["kernel_vs_closed_form"] = ok
        passed = passed and ok
    _write_table(out / "langevin_variance.csv", header, rows)
    return {"passed": bool(passed), "tolerances": {"sigmas": cfg.sigmas, "euler_budget": budget},
            "results": results, "files": ["langevin_kernel.csv", "langevin_kernel.json", "langevin_variance.csv"]}


def cmd_equiv(cfg: RunConfig, out: Path) -> dict:
    model, grid = _setup(cfg)
    K = _kernel(cfg, model, grid)
    ell = VolterraKernel.exponential(cfg.theta)
    Kp = volterra_perturb(K, ell)
    Kl = langevin_kernel(K, cfg.theta)
    save_kernel(Kp, out / "perturbed_kernel.csv")
    diff = float(np.max(np.abs(Kp.matrix - Kl.matrix)))
    eq = unitary_equivalence_check(K, Kp, cfg.equivalence_tol)
    C = Kp.covariance()
    _write_table(out / "perturbed_covariance.csv", ["t", *[repr(float(t)) for t in grid.nodes]],
                 [[t, *row] for t, row in zip(grid.nodes, C)])
    return {
        "passed": bool(diff <= cfg.tol),
        "tolerances": {"langevin": cfg.tol, "equivalence": cfg.equivalence_tol},
        "results": {"max_abs_diff_langevin": diff,
                    "covariance_changed": not eq.passed,
                    "max_abs_covariance_change": eq.max_abs_diff},
        "files": ["perturbed_kernel.csv", "perturbed_kernel.json", "perturbed_covariance.csv"],
    }


def cmd_kl(cfg: RunConfig, out: Path) -> dict:
    model, grid = _setup(cfg)
    K = _kernel(cfg, model, grid)
    try:
        ms = [int(x) for x in cfg.m.split(",")]
    except ValueError:
        raise InvalidArgumentError("m must be comma-separated integers") from None
    full = series_expand(K, cfg.basis, max(ms))
    rows, integrated = [], {}
    for m in ms:
        e = series_expand(K, cfg.basis, m)
        err = series_truncation_error(e, model)
        integrated[str(m)] = integrated_truncation_error(e, model)
        rows += [[m, t, v] for t, v in zip(grid.nodes, err)]
    _write_table(out / "truncation_error.csv", ["m", "t", "error"], rows)
    _write_table(out / "expansion.csv", ["j", *[repr(float(t)) for t in grid.nodes]],
                 [[j + 1, *row] for j, row in enumerate(full.table)])
    return {"passed": True, "tolerances": {"orthonormality": 1e-8},
            "results": {"integrated_error": integrated, "basis": cfg.basis},
            "files": ["truncation_error.csv", "expansion.csv"]}


def cmd_ito_check(cfg: RunConfig, out: Path, workers: int) -> dict:
    model, grid = _setup(cfg)
    K = _kernel(cfg, model, grid)
    func = _ito_function(cfg.f)
    G = _test_variable(cfg.G, grid.T)
    rep = ito_duality_check(model, K, func, cfg.t, G, cfg.paths, cfg.seed, workers=workers,
                            sigmas=cfg.sigmas)
    _write_table(out / "ito_check.csv",
                 ["lhs_mean", "rhs_mean", "lhs_se", "rhs_se", "diff_se", "z", "passed"],
                 [[rep.lhs_mean, rep.rhs_mean, rep.lhs_se, rep.rhs_se, rep.diff_se, rep.z,
                   "pass" if rep.passed else "fail"]])
    return {"passed": rep.passed, "tolerances": {"sigmas": cfg.sigmas},
            "results": {k: v for k, v in rep.to_dict().items() if k != "meta"} | {"meta": rep.meta},
            "files": ["ito_check.csv"]}


def cmd_chaos_check(cfg: RunConfig, out: Path) -> dict:
    model, grid = _setup(cfg)
    K = _kernel(cfg, model, grid)
    f = _step_function(cfg.f, grid.T)
    g = _step_function(cfg.g, grid.T)
    noise = noise_matrix(cfg.seed, cfg.draws, K.n_noise)
    rows, passed = [], True
    for p in range(cfg.max_order + 1):
        for q in range(cfg.max_order + 1 - p):
            rep = product_formula_check(K, f, g, p, q, noise, cfg.tol)
            passed &= rep.passed
            rows.append([p, q, rep.inner, rep.max_abs_deviation, rep.max_rel_deviation,
                         "pass" if rep.passed else "fail"])
    _write_table(out / "product_formula.csv",
                 ["p", "q", "inner", "max_abs_deviation", "max_rel_deviation", "passed"], rows)
    return {"passed": bool(passed), "tolerances": {"per_draw": cfg.tol},
            "results": {"pairs": len(rows)}, "files": ["product_formula.csv"]}


HANDLERS = {
    "factorize": cmd_factorize,
    "simulate": cmd_simulate,
    "bridge": cmd_bridge,
    "langevin": cmd_langevin,
    "equiv": cmd_equiv,
    "kl": cmd_kl,
    "chaos-check": cmd_chaos_check,
}


# -------------------------------------------------------------------- main

def _workers(args) -> int:
    raw = getattr(args, "threads", None) or os.environ.get("FREDHOLM_THREADS") or 1
    try:
        return max(1, int(raw))
    except ValueError:
        raise _UsageError(f"thread count must be an integer, got {raw!r}") from None


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # usage errors, --help and --version
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    if args.command is None:
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    sub = parser._subparsers._group_actions[0].choices[args.command]  # noqa: SLF001
    try:
        file_values = {}
        if hasattr(args, "config"):
            try:
                file_values = read_config_text(Path(args.config).read_text())
            except OSError as exc:
                raise _UsageError(f"cannot read config file: {exc}") from None
            file_values.pop("command", None)
        cli_values = {k: v for k, v in vars(args).items() if k not in ("command", "config", "out", "threads")}
        cfg = RunConfig.resolve(args.command, file_values, cli_values)
        workers = _workers(args)
        out = Path(getattr(args, "out", None) or os.environ.get("FREDHOLM_OUT_DIR") or "fredholm-out")
        if not cfg.model:
            raise _UsageError("a model is required (--model or model = ... in the config file)")
        if not cfg.model.startswith("csv:"):
            parse_model_spec(cfg.model, cfg.T)
    except _UsageError as exc:
        sub.print_usage(sys.stderr)
        print(f"fredholm {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except InvalidArgumentError as exc:
        sub.print_usage(sys.stderr)
        print(f"fredholm {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    out.mkdir(parents=True, exist_ok=True)
    try:
        with threadpool_limits(limits=1):
            if args.command == "ito-check":
                info = cmd_ito_check(cfg, out, workers)
            else:
                info = HANDLERS[args.command](cfg, out)
    except FredholmError as exc:
        print(f"fredholm {args.command}: {exc.kind}: {exc}", file=sys.stderr)
        _write_manifest(out, cfg, {"passed": False, "error": {"kind": exc.kind, "message": str(exc)}})
        return EXIT_PRECONDITION
    _write_manifest(out, cfg, info)
    status = "pass" if info["passed"] else "fail"
    print(f"{args.command}: {status} ({out / 'manifest.json'})")
    return EXIT_PASS if info["passed"] else EXIT_CHECK_FAILED


def _jsonify(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonify(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonify(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else repr(v)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _write_manifest(out: Path, cfg: RunConfig, info: dict) -> None:
    manifest = {
        "command": cfg.command,
        "config": {k: cfg.values[k] for k in sorted(cfg.values)},
        "config_hash": cfg.hash,
        "seed": cfg.seed,
        "version": __version__,
    }
    manifest.update(info)
    (out / "manifest.json").write_text(json.dumps(_jsonify(manifest), indent=2, sort_keys=True) + "\n")
    (out / "config.txt").write_text(cfg.canonical())


def main(argv=None) -> None:
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
