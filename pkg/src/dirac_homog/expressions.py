"""Closed-form potential expressions such as ``"4*cos(2*pi*y1)"``.

Parsing goes through :mod:`ast` with a whitelist of node types, so only
numbers, the variables ``y1``/``y2``, the constant ``pi``, arithmetic
``+ - * / **``, parentheses and ``sin``/``cos`` calls are accepted.
"""

from __future__ import annotations

import ast
from typing import Callable

import numpy as np

from .errors import ExpressionError

_FUNCS = {"sin": np.sin, "cos": np.cos}
_NAMES = {"pi": np.pi}
_VARS = ("y1", "y2")
_BINOPS = {
    ast.Add: np.add,
    ast.Sub: np.subtract,
    ast.Mult: np.multiply,
    ast.Div: np.divide,
    ast.Pow: np.power,
}


def _compile(node: ast.AST, src: str) -> Callable:
    if isinstance(node, ast.Expression):
        return _compile(node.body, src)
    if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)) and not isinstance(node.value, bool):
        val = float(node.value)
        return lambda y1, y2: val
    if isinstance(node, ast.Name):
        if node.id == "y1":
            return lambda y1, y2: y1
        if node.id == "y2":
            return lambda y1, y2: y2
        if node.id in _NAMES:
            val = _NAMES[node.id]
            return lambda y1, y2: val
        raise ExpressionError(f"unknown name {node.id!r} in {src!r}")
    if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
        inner = _compile(node.operand, src)
        if isinstance(node.op, ast.USub):
            return lambda y1, y2: -inner(y1, y2)
        return inner
    if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
        op = _BINOPS[type(node.op)]
        lhs, rhs = _compile(node.left, src), _compile(node.right, src)
        return lambda y1, y2: op(lhs(y1, y2), rhs(y1, y2))
    if isinstance(node, ast.Call):
        if not isinstance(node.func, ast.Name) or node.func.id not in _FUNCS or node.keywords or len(node.args) != 1:
            raise ExpressionError(f"only sin(.) and cos(.) calls are allowed in {src!r}")
        fn = _FUNCS[node.func.id]
        arg = _compile(node.args[0], src)
        return lambda y1, y2: fn(arg(y1, y2))
    raise ExpressionError(f"unsupported syntax {type(node).__name__} in {src!r}")


def parse_expression(src: str) -> Callable[[np.ndarray, np.ndarray], np.ndarray]:
    """Compile an expression string into a vectorised ``f(y1, y2)``."""
    if not isinstance(src, str) or not src.strip():
        raise ExpressionError("empty expression")
    try:
        tree = ast.parse(src.strip(), mode="eval")
    except SyntaxError as exc:
        raise ExpressionError(f"cannot parse {src!r}: {exc.msg}") from None
    fn = _compile(tree, src)

    def f(y1, y2):
        y1 = np.asarray(y1, dtype=float)
        y2 = np.asarray(y2, dtype=float)
        with np.errstate(divide="raise", invalid="raise"):
            try:
                out = fn(y1, y2)
            except FloatingPointError as exc:
                raise ExpressionError(f"{src!r}: {exc}") from None
        return np.broadcast_to(np.asarray(out, dtype=float), np.broadcast(y1, y2).shape)

    return f
