"""The closed-form expression grammar used in configuration files.

    expr   := term (("+" | "-") term)*
    term   := factor (("*" | "/") factor)*
    factor := ("+" | "-") factor | atom (("^" | "**") factor)?
    atom   := NUMBER | VAR | "pi" | FUNC "(" expr ")" | "pow" "(" expr "," expr ")" | "(" expr ")"
    FUNC   := exp | log | tanh | sin

Numbers are read as exact rationals (``0.1`` is 1/10).  The allowed variable
is ``u`` for functions of the field and ``x`` for initial data.  Anything
else (attribute access, other names, keywords, comprehensions, ...) is
rejected, so parsing never executes code.
"""

from __future__ import annotations

import ast

import sympy as sp

FUNCTIONS = {"exp": sp.exp, "log": sp.log, "tanh": sp.tanh, "sin": sp.sin}


class GrammarError(ValueError):
    """The text is not an expression of the closed-form grammar."""


def parse_expr(text: str, variables=("u",)) -> sp.Expr:
    """Parse ``text`` into a sympy expression in the given variables."""
    src = text.strip().replace("^", "**")
    if not src:
        raise GrammarError("empty expression")
    try:
        tree = ast.parse(src, mode="eval")
    except SyntaxError as exc:
        raise GrammarError(f"cannot parse {text!r}: {exc.msg}") from None
    symbols = {v: sp.Symbol(v) for v in variables}
    return _convert(tree.body, symbols, src)


MAX_EXPONENT = 64


def _pow(base, exponent):
    if exponent.is_number and abs(exponent) > MAX_EXPONENT:
        raise GrammarError(f"exponent {exponent} exceeds {MAX_EXPONENT}")
    return sp.Pow(base, exponent)


def _convert(node, symbols, text):
    conv = lambda n: _convert(n, symbols, text)  # noqa: E731
    if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)) and not isinstance(node.value, bool):
        return sp.Rational(ast.get_source_segment(text, node) or repr(node.value))
    if isinstance(node, ast.Name):
        if node.id in symbols:
            return symbols[node.id]
        if node.id == "pi":
            return sp.pi
        raise GrammarError(f"unknown name {node.id!r}")
    if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.UAdd, ast.USub)):
        v = conv(node.operand)
        return -v if isinstance(node.op, ast.USub) else v
    if isinstance(node, ast.BinOp):
        ops = {ast.Add: sp.Add, ast.Sub: lambda a, b: a - b, ast.Mult: sp.Mul,
               ast.Div: lambda a, b: a / b, ast.Pow: _pow}
        for kind, fn in ops.items():
            if isinstance(node.op, kind):
                return fn(conv(node.left), conv(node.right))
        raise GrammarError(f"operator {type(node.op).__name__} is not allowed")
    if isinstance(node, ast.Call) and isinstance(node.func, ast.Name) and not node.keywords:
        name = node.func.id
        if name in FUNCTIONS and len(node.args) == 1:
            return FUNCTIONS[name](conv(node.args[0]))
        if name == "pow" and len(node.args) == 2:
            return _pow(conv(node.args[0]), conv(node.args[1]))
        raise GrammarError(f"function {name!r} with {len(node.args)} argument(s) is not allowed")
    raise GrammarError(f"{type(node).__name__} is not part of the grammar")


__all__ = ["parse_expr", "GrammarError", "FUNCTIONS"]
