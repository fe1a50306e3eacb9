"""Tiny expression language for user-supplied weight generators.

Grammar: numbers, the variables ``x`` (first coordinate), ``y`` (second
coordinate, d=2 only) and ``r`` (Euclidean norm), the constants ``pi`` and
``e``, the operators ``+ - * / **`` and the functions ``abs``, ``log``,
``exp``, ``sqrt``, ``pow``.  Expressions are parsed once with :mod:`ast` and
evaluated on numpy arrays; anything outside the grammar is rejected.
"""
from __future__ import annotations

import ast
import math
from typing import Callable

import numpy as np

_FUNCS = {
    "abs": np.abs,
    "log": np.log,
    "exp": np.exp,
    "sqrt": np.sqrt,
    "pow": np.power,
}
_CONSTS = {"pi": math.pi, "e": math.e}
_VARS = ("x", "y", "r")
_BINOPS = {
    ast.Add: np.add,
    ast.Sub: np.subtract,
    ast.Mult: np.multiply,
    ast.Div: np.divide,
    ast.Pow: np.power,
}
_UNARY = {ast.UAdd: np.positive, ast.USub: np.negative}


class ExpressionError(ValueError):
    pass


def _check(node: ast.AST) -> None:
    if isinstance(node, ast.Expression):
        _check(node.body)
    elif isinstance(node, ast.BinOp):
        if type(node.op) not in _BINOPS:
            raise ExpressionError(f"operator {type(node.op).__name__} not allowed")
        _check(node.left)
        _check(node.right)
    elif isinstance(node, ast.UnaryOp):
        if type(node.op) not in _UNARY:
            raise ExpressionError(f"operator {type(node.op).__name__} not allowed")
        _check(node.operand)
    elif isinstance(node, ast.Call):
        if not isinstance(node.func, ast.Name) or node.func.id not in _FUNCS:
            raise ExpressionError("only abs, log, exp, sqrt, pow may be called")
        if node.keywords:
            raise ExpressionError("keyword arguments not allowed")
        for a in node.args:
            _check(a)
    elif isinstance(node, ast.Name):
        if node.id not in _VARS and node.id not in _CONSTS:
            raise ExpressionError(f"unknown name {node.id!r}")
    elif isinstance(node, ast.Constant):
        if not isinstance(node.value, (int, float)) or isinstance(node.value, bool):
            raise ExpressionError(f"bad constant {node.value!r}")
    else:
        raise ExpressionError(f"syntax {type(node).__name__} not allowed")


def _eval(node: ast.AST, env: dict):
    if isinstance(node, ast.Expression):
        return _eval(node.body, env)
    if isinstance(node, ast.BinOp):
        return _BINOPS[type(node.op)](_eval(node.left, env), _eval(node.right, env))
    if isinstance(node, ast.UnaryOp):
        return _UNARY[type(node.op)](_eval(node.operand, env))
    if isinstance(node, ast.Call):
        return _FUNCS[node.func.id](*(_eval(a, env) for a in node.args))
    if isinstance(node, ast.Name):
        if node.id in env:
            return env[node.id]
        return _CONSTS[node.id]
    return float(node.value)


def compile_expression(source: str) -> Callable[..., np.ndarray]:
    """Return ``f(*coords) -> ndarray`` for an expression in the grammar."""
    try:
        tree = ast.parse(source.strip(), mode="eval")
    except SyntaxError as exc:
        raise ExpressionError(f"cannot parse {source!r}: {exc.msg}") from None
    _check(tree)

    def evaluate(*coords):
        coords = [np.asarray(c, dtype=float) for c in coords]
        env = {"x": coords[0], "r": np.sqrt(sum(c * c for c in coords))}
        if len(coords) > 1:
            env["y"] = coords[1]
        try:
            with np.errstate(all="ignore"):
                out = _eval(tree, env)
        except KeyError as exc:
            raise ExpressionError(f"variable {exc.args[0]} undefined in dimension {len(coords)}") from None
        return np.broadcast_to(np.asarray(out, dtype=float), coords[0].shape)

    evaluate.source = source
    return evaluate
