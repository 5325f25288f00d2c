import pytest
import sympy as sp

from varstring.grammar import MAX_EXPONENT, GrammarError, parse_expr

u, x = sp.symbols("u x")


@pytest.mark.parametrize("text, expected", [
    ("u^3/6", u ** 3 / 6),
    ("1/(1 + u**2/5)", 1 / (1 + u ** 2 / 5)),
    ("0.1*u", sp.Rational(1, 10) * u),
    ("-u + +2", -u + 2),
    ("exp(u) + log(2) - tanh(u)", sp.exp(u) + sp.log(2) - sp.tanh(u)),
    ("pow(u, 2) * pi", u ** 2 * sp.pi),
])
def test_accepted(text, expected):
    assert sp.simplify(parse_expr(text) - expected) == 0


def test_decimals_are_exact():
    assert parse_expr("0.3") == sp.Rational(3, 10)


def test_variables_are_configurable():
    assert parse_expr("sin(x)/2", variables=("x",)) == sp.sin(x) / 2
    with pytest.raises(GrammarError):
        parse_expr("sin(u)", variables=("x",))


@pytest.mark.parametrize("text", [
    "",
    "__import__('os')",
    "u.real",
    "cos(u)",
    "exp(u, 2)",
    "[u]",
    "u if u else 1",
    "lambda: 1",
    "u == 1",
    "u % 2",
    "True",
    "'u'",
    "exp(u=1)",
    "u +",
    f"u^{MAX_EXPONENT + 1}",
])
def test_rejected(text):
    with pytest.raises(GrammarError):
        parse_expr(text)


def test_grammar_error_is_value_error():
    assert issubclass(GrammarError, ValueError)
