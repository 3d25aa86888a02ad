from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from obatakit.expr import (
    ExprDomainError,
    ExprSyntaxError,
    UnknownIdentifierError,
    VariableRangeError,
    eval_jet1,
    eval_jet2,
    evaluate,
    parse,
)


def test_parse_valid_tree() -> None:
    e = parse("x0^2 + sin(x1)", 2)
    assert e.dim == 2
    assert e.variables() == {0, 1}


def test_syntax_error_at_end() -> None:
    with pytest.raises(ExprSyntaxError, match="end of input"):
        parse("x0 +", 2)


def test_variable_out_of_range() -> None:
    with pytest.raises(VariableRangeError):
        parse("x5", 2)


def test_unknown_identifier() -> None:
    with pytest.raises(UnknownIdentifierError):
        parse("foo(x0)", 1)


def test_jet_square() -> None:
    j = eval_jet2(parse("x0^2", 2), [2.0, 0.0])
    assert j.value == 4.0
    np.testing.assert_allclose(j.grad, [4, 0])
    np.testing.assert_allclose(j.hess, [[2, 0], [0, 0]])


def test_jet_exp() -> None:
    j = eval_jet2(parse("exp(x0)", 1), [0.0])
    assert j.value == 1.0
    np.testing.assert_allclose(j.grad, [1])
    np.testing.assert_allclose(j.hess, [[1]])


def test_jet_product() -> None:
    j = eval_jet2(parse("x0*x1", 2), [3.0, 5.0])
    assert j.value == 15.0
    np.testing.assert_allclose(j.grad, [5, 3])
    np.testing.assert_allclose(j.hess, [[0, 1], [1, 0]])


def test_domain_error_names_node() -> None:
    with pytest.raises(ExprDomainError):
        eval_jet2(parse("ln(x0)", 1), [-1.0])


def test_jet1_matches_jet2() -> None:
    e = parse("2 + sin(x0) * exp(-x0^2) - sqrt(1 + x0^2)", 1)
    for x in np.linspace(-2, 2, 9):
        j = eval_jet2(e, [x])
        v, d1, d2 = eval_jet1(e, x)
        assert v == pytest.approx(j.value, abs=1e-14)
        assert d1 == pytest.approx(j.grad[0], abs=1e-13)
        assert d2 == pytest.approx(j.hess[0, 0], abs=1e-12)


def test_constants_and_precedence() -> None:
    assert evaluate(parse("-2^2", 1), [0.0]) == -4.0
    assert evaluate(parse("2^3^2", 1), [0.0]) == 512.0
    assert evaluate(parse("pi", 1), [0.0]) == pytest.approx(math.pi)


# random expressions for the round-trip and jet/FD properties
_LEAF = st.one_of(
    st.sampled_from(["x0", "x1", "x2"]),
    st.floats(0.1, 3.0).map(lambda c: f"{c:.3f}"),
)


def _node(children):
    unary = st.tuples(st.sampled_from(["sin", "cos", "tanh", "exp"]), children).map(
        lambda t: f"{t[0]}(0.3*({t[1]}))"
    )
    binary = st.tuples(children, st.sampled_from(["+", "-", "*"]), children).map(lambda t: f"({t[0]} {t[1]} {t[2]})")
    return st.one_of(unary, binary)


EXPRS = st.recursive(_LEAF, _node, max_leaves=6)


@settings(max_examples=60, deadline=None)
@given(EXPRS)
def test_text_round_trip(text: str) -> None:
    e = parse(text, 3)
    again = parse(e.text, 3)
    assert again.text == e.text
    p = np.array([0.3, -0.7, 1.1])
    assert evaluate(again, p) == pytest.approx(evaluate(e, p), rel=1e-12, abs=1e-12)


@settings(max_examples=60, deadline=None)
@given(EXPRS, st.lists(st.floats(-1.0, 1.0), min_size=3, max_size=3))
def test_jet_matches_finite_differences(text: str, point: list[float]) -> None:
    e = parse(text, 3)
    p = np.array(point)
    j = eval_jet2(e, p)
    h = 1e-5
    I = np.eye(3)
    fd_grad = np.array([(e(p + h * I[i]) - e(p - h * I[i])) / (2 * h) for i in range(3)])
    scale = 1.0 + float(np.max(np.abs(j.grad)))
    assert np.max(np.abs(fd_grad - j.grad)) <= 1e-6 * scale
    fd_hess = np.array([(eval_jet2(e, p + h * I[i]).grad - eval_jet2(e, p - h * I[i]).grad) / (2 * h) for i in range(3)])
    assert np.max(np.abs(fd_hess - j.hess)) <= 1e-6 * (1.0 + float(np.max(np.abs(j.hess))))
