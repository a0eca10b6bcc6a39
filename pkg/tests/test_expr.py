import numpy as np
import pytest

from negimag.expr import (
    EvaluationError,
    ExpressionSyntaxError,
    UnknownIdentifierError,
    compile_scalar,
    compile_vector,
    evaluate_scalar,
    parse_dynamics,
)

PLANT_F2 = "-3*x1 - x2/(1 + x2^2) + u1"


def test_reference_right_hand_side():
    e = parse_dynamics(PLANT_F2)
    assert evaluate_scalar(e, [1.0, 2.0], [1.0]) == pytest.approx(-2.4, abs=1e-15)


def test_constant_zero_broadcasts():
    e = parse_dynamics("0")
    out = e(np.ones((4, 2)), np.ones((4, 1)))
    assert out.shape == (4,) and np.all(out == 0)


@pytest.mark.parametrize(
    "text, offset",
    [("x1 +", 4), ("(x1", 3), ("x1 ^ 2.5", 5), ("3 $ 4", 2), ("x1 x2", 3), ("", 0)],
)
def test_syntax_errors_report_offset(text, offset):
    with pytest.raises(ExpressionSyntaxError) as info:
        parse_dynamics(text)
    assert info.value.position == offset
    assert f"offset {offset}" in str(info.value)


@pytest.mark.parametrize("name", ["y1", "x0", "x10", "log", "pi"])
def test_unknown_identifiers(name):
    with pytest.raises(UnknownIdentifierError):
        parse_dynamics(f"{name} + 1")


def test_precedence_and_unary_minus():
    e = parse_dynamics("-2^2 + 3*4/2 - (1 - 5)")
    # unary minus binds to the base: (-2)^2
    assert evaluate_scalar(e, [0.0], [0.0]) == 4 + 6 + 4


def test_functions():
    e = parse_dynamics("sin(x1) + cos(x1) + tanh(u1) + exp(u1) + abs(-x1) + sqrt(x1)")
    x, u = 0.7, -0.3
    expect = np.sin(x) + np.cos(x) + np.tanh(u) + np.exp(u) + abs(x) + np.sqrt(x)
    assert evaluate_scalar(e, [x], [u]) == pytest.approx(expect, rel=1e-15)


def test_guards():
    with pytest.raises(EvaluationError):
        evaluate_scalar(parse_dynamics("1/x1"), [0.0], [0.0])
    with pytest.raises(EvaluationError):
        evaluate_scalar(parse_dynamics("sqrt(x1)"), [-1.0], [0.0])
    assert parse_dynamics("1/x1").has_division


def test_introspection():
    e = parse_dynamics("x3*u2 + x1")
    assert e.variables() == [("u", 2), ("x", 1), ("x", 3)]
    assert e.uses_input and e.max_index("x") == 3 and e.max_index("u") == 2
    assert not parse_dynamics("x1^3").uses_input


def test_compiled_backends_agree():
    exprs = [parse_dynamics("x2 - u1"), parse_dynamics(PLANT_F2), parse_dynamics("sqrt(abs(x1)) * exp(-x2^2)")]
    rng = np.random.default_rng(0)
    X = rng.normal(size=(20, 2))
    U = rng.normal(size=(20, 1))
    vec = np.array(compile_vector(exprs)(X, U))
    scal = np.array([compile_scalar(exprs)(list(x), list(u)) for x, u in zip(X, U)]).T
    tree = np.array([e(X, U) for e in exprs])
    assert np.allclose(vec, tree, rtol=1e-15, atol=0)
    assert np.allclose(scal, tree, rtol=1e-14, atol=1e-15)


def test_scalar_backend_guards():
    with pytest.raises(EvaluationError):
        compile_scalar([parse_dynamics("1/x1")])([0.0], [0.0])
    with pytest.raises(EvaluationError):
        compile_scalar([parse_dynamics("sqrt(x1)")])([-2.0], [0.0])
