"""A closed, whitelisted expression grammar for scenario files.

Expressions are parsed with :mod:`ast` and every node is checked against a
whitelist before a :mod:`sympy` expression is built from it, so nothing in
a scenario file is ever executed.  Allowed: numbers, declared variables and
parameters, ``pi``, ``+ - * / **``, unary minus, and the functions below.
The sympy form gives exact derivatives; :func:`compile_expr` turns it into a
vectorized numpy function.
"""
from __future__ import annotations

import ast

import numpy as np
import sympy as sp

FUNCTIONS = {
    "sin": sp.sin,
    "cos": sp.cos,
    "tan": sp.tan,
    "exp": sp.exp,
    "log": sp.log,
    "sqrt": sp.sqrt,
    "tanh": sp.tanh,
}
CONSTANTS = {"pi": sp.pi}

_BINOPS = {
    ast.Add: lambda a, b: a + b,
    ast.Sub: lambda a, b: a - b,
    ast.Mult: lambda a, b: a * b,
    ast.Div: lambda a, b: a / b,
    ast.Pow: lambda a, b: a**b,
}


class ExpressionError(ValueError):
    pass


def parse_expr(text, variables, params=None):
    """Parse ``text`` into a sympy expression over ``variables``.

    ``params`` maps parameter names to numbers; they are substituted as exact
    rationals where possible.
    """
    params = params or {}
    symbols = {name: sp.Symbol(name, real=True) for name in variables}
    clash = set(symbols) & (set(params) | set(FUNCTIONS) | set(CONSTANTS))
    if clash:
        raise ExpressionError(f"names used twice: {sorted(clash)}")
    if isinstance(text, (int, float)):
        return sp.nsimplify(text) if float(text).is_integer() else sp.Float(text)
    try:
        tree = ast.parse(str(text).replace("^", "**"), mode="eval")
    except SyntaxError as exc:
        raise ExpressionError(f"cannot parse {text!r}: {exc.msg}") from None

    def build(node):
        if isinstance(node, ast.Expression):
            return build(node.body)
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)) \
                and not isinstance(node.value, bool):
            v = node.value
            return sp.Integer(v) if isinstance(v, int) else sp.Float(v)
        if isinstance(node, ast.Name):
            if node.id in symbols:
                return symbols[node.id]
            if node.id in params:
                return sp.Float(params[node.id])
            if node.id in CONSTANTS:
                return CONSTANTS[node.id]
            raise ExpressionError(f"unknown name {node.id!r} in {text!r}")
        if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
            return _BINOPS[type(node.op)](build(node.left), build(node.right))
        if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
            val = build(node.operand)
            return -val if isinstance(node.op, ast.USub) else val
        if isinstance(node, ast.Call) and isinstance(node.func, ast.Name) \
                and node.func.id in FUNCTIONS and not node.keywords and len(node.args) == 1:
            return FUNCTIONS[node.func.id](build(node.args[0]))
        raise ExpressionError(f"disallowed syntax {type(node).__name__} in {text!r}")

    return build(tree)


def compile_expr(expr, variables):
    """Vectorized numpy evaluator ``f(*arrays)`` broadcasting constants to the input shape."""
    syms = [sp.Symbol(name, real=True) for name in variables]
    fn = sp.lambdify(syms, expr, modules="numpy")

    def f(*args):
        args = [np.asarray(a, dtype=float) for a in args]
        shape = np.broadcast_shapes(*(a.shape for a in args)) if args else ()
        return np.broadcast_to(np.asarray(fn(*args), dtype=float), shape)

    return f


def derivative(expr, variable):
    return sp.diff(expr, sp.Symbol(variable, real=True))
