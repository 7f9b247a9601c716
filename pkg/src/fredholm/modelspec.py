"""Parse textual model specifications such as ``fbm:H=0.75`` or ``rank-one:f=t``.

Grammar: ``name[:key=value[,key=value...]]``. Rank-one functions are
arithmetic expressions in ``t`` built from numbers, ``+ - * / **``, unary
minus and a handful of numpy functions; nothing else is evaluated.
"""

from __future__ import annotations

import ast
from typing import Callable

import numpy as np

from . import covariance as cov
from .errors import InvalidArgumentError

__all__ = ["parse_model_spec", "compile_expression", "MODEL_NAMES"]

MODEL_NAMES = ("bm", "bb", "ou", "fbm", "rank-one", "truncated-series", "csv")

_FUNCS = {
    "sin": np.sin, "cos": np.cos, "tan": np.tan, "exp": np.exp, "log": np.log,
    "sqrt": np.sqrt, "abs": np.abs, "sinh": np.sinh, "cosh": np.cosh, "tanh": np.tanh,
}
_CONSTS = {"pi": np.pi, "e": np.e}
_BINOPS = {
    ast.Add: np.add, ast.Sub: np.subtract, ast.Mult: np.multiply,
    ast.Div: np.divide, ast.Pow: np.power,
}


def compile_expression(text: str) -> Callable:
    """Turn ``text`` (an expression in ``t``) into a vectorized function of ``t``."""
    try:
        tree = ast.parse(text, mode="eval")
    except SyntaxError as exc:
        raise InvalidArgumentError(f"cannot parse expression {text!r}: {exc.msg}") from None

    def build(node):
        if isinstance(node, ast.Expression):
            return build(node.body)
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
            v = float(node.value)
            return lambda t: np.full(np.shape(t), v)
        if isinstance(node, ast.Name):
            if node.id == "t":
                return lambda t: np.asarray(t, dtype=float)
            if node.id in _CONSTS:
                v = _CONSTS[node.id]
                return lambda t: np.full(np.shape(t), v)
        if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
            op, a, b = _BINOPS[type(node.op)], build(node.left), build(node.right)
            return lambda t: op(a(t), b(t))
        if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
            a = build(node.operand)
            sign = -1.0 if isinstance(node.op, ast.USub) else 1.0
            return lambda t: sign * a(t)
        if (isinstance(node, ast.Call) and isinstance(node.func, ast.Name)
                and node.func.id in _FUNCS and len(node.args) == 1 and not node.keywords):
            fn, a = _FUNCS[node.func.id], build(node.args[0])
            return lambda t: fn(a(t))
        raise InvalidArgumentError(f"unsupported construct in expression {text!r}")

    inner = build(tree)

    def fn(t):
        # non-finite values are reported by the trace and PSD checks downstream
        with np.errstate(all="ignore"):
            return inner(t)

    fn.__name__ = text
    return fn


def _split(spec: str) -> tuple[str, dict]:
    name, _, rest = spec.strip().partition(":")
    name = name.strip().lower()
    if name == "csv":
        return name, {"path": rest.strip()}
    params = {}
    if rest.strip():
        for item in rest.split(","):
            key, eq, value = item.partition("=")
            if not eq:
                raise InvalidArgumentError(f"model parameter {item!r} is not key=value")
            params[key.strip()] = value.strip()
    return name, params


def _num(params: dict, key: str, default: float) -> float:
    try:
        return float(params.pop(key, default))
    except ValueError:
        raise InvalidArgumentError(f"model parameter {key} must be a number") from None


def parse_model_spec(spec: str, T: float = 1.0) -> cov.CovarianceModel:
    """Build a covariance model from its textual form.

    ``bm``, ``bb``, ``ou[:theta=..,sigma=..]``, ``fbm[:H=..]``,
    ``rank-one:f=<expr in t>``, ``truncated-series[:n=..]`` and
    ``csv:<path>`` (a tabulated covariance; its last node sets the horizon).
    """
    if not spec:
        raise InvalidArgumentError("empty model specification")
    name, params = _split(spec)
    if name == "bm":
        model = cov.brownian_motion(T)
    elif name == "bb":
        model = cov.brownian_bridge(T)
    elif name == "ou":
        model = cov.ornstein_uhlenbeck(_num(params, "theta", 1.0), _num(params, "sigma", 1.0), T)
    elif name == "fbm":
        model = cov.fractional_brownian(_num(params, "H", 0.75), T)
    elif name == "rank-one":
        expr = params.pop("f", None)
        if not expr:
            raise InvalidArgumentError("rank-one needs f=<expression in t>")
        model = cov.rank_one(compile_expression(expr), T, label=expr)
    elif name == "truncated-series":
        n = _num(params, "n", 10)
        if n != int(n):
            raise InvalidArgumentError("truncated-series rank must be an integer")
        model = cov.truncated_series(int(n), T)
    elif name == "csv":
        if not params["path"]:
            raise InvalidArgumentError("csv model needs a path")
        return cov.read_covariance_csv(params["path"])
    else:
        raise InvalidArgumentError(f"unknown model {name!r}; choose from {MODEL_NAMES}")
    if params:
        raise InvalidArgumentError(f"unknown parameters for {name}: {sorted(params)}")
    return model
