import numpy as np
import pytest

from wigneravg.errors import ExpressionError
from wigneravg.expr import parse


@pytest.mark.parametrize("text,env,expected", [
    ("1+2*3", {}, 7.0),
    ("2^3^2", {}, 512.0),
    ("-x^2", {"x": 3.0}, -9.0),
    ("sin(pi/2)+cos(0)", {}, 2.0),
    ("exp(-x^2/2)*tanh(0)", {"x": 1.0}, 0.0),
    ("hbar*x", {"x": 2.0, "hbar": 0.5}, 1.0),
    ("1e-3*x", {"x": 1000.0}, 1.0),
])
def test_evaluate(text, env, expected):
    assert parse(text)(**env) == pytest.approx(expected)


def test_vectorised():
    x = np.linspace(-1, 1, 11)
    np.testing.assert_allclose(parse("x^2 - 3*x")(x=x), x ** 2 - 3 * x)


def test_symbolic_derivative_matches_analytic():
    e = parse("sin(2*x)*exp(-x^2)")
    x = np.linspace(-2, 2, 9)
    want = 2 * np.cos(2 * x) * np.exp(-x ** 2) - 2 * x * np.sin(2 * x) * np.exp(-x ** 2)
    np.testing.assert_allclose(e.diff("x")(x=x), want, atol=1e-13)


def test_variables():
    assert parse("a*x + hbar").variables == {"a", "x", "hbar"}


@pytest.mark.parametrize("text,column", [("sin(", 5), ("1 + * 2", 5), ("x)", 2)])
def test_parse_errors_carry_column(text, column):
    with pytest.raises(ExpressionError) as err:
        parse(text)
    assert err.value.column == column
    assert f"column {column}" in str(err.value)


@pytest.mark.parametrize("text", ["", "   ", "foo(1)", "3 $ 4"])
def test_rejects_garbage(text):
    with pytest.raises(ExpressionError):
        parse(text)
