import math

import numpy as np
import pytest

from willmore.expressions import (
    ParseError,
    SqrtBranchWarning,
    conj_expr,
    differentiate,
    ensure_expr,
    evaluate,
    is_real_on_axis,
    parse,
)


def test_parse_quadratic_entry():
    e = parse("1 - z^2/8")
    assert evaluate(e, 0.0) == 1.0
    assert evaluate(e, 2.0) == pytest.approx(0.5)


def test_parse_zero():
    assert evaluate(parse("0"), 3.7 + 1j) == 0.0


def test_print_parse_round_trip():
    e = parse("cos(3*u) + i*(1 + 0.3*u)")
    e2 = parse(str(e))
    rng = np.random.default_rng(41)
    for _ in range(20):
        z = complex(rng.standard_normal(), rng.standard_normal())
        assert evaluate(e2, z) == pytest.approx(evaluate(e, z), abs=1e-15)


def test_eval_identity():
    assert evaluate(parse("z"), 2 + 3j) == 2 + 3j
    assert evaluate(parse("u"), 2 + 3j) == 2 + 3j  # same variable


def _sin_series(z, terms=30):
    total = 0j
    for k in range(terms):
        total += (-1) ** k * z ** (2 * k + 1) / math.factorial(2 * k + 1)
    return total


def test_eval_sin_at_imaginary_argument():
    got = evaluate(parse("sin(u)"), 1j)
    assert abs(got - _sin_series(1j)) < 1e-12
    assert got == pytest.approx(1j * math.sinh(1.0), abs=1e-14)


def test_eval_clifford_row_at_zero():
    entries = [
        "sqrt(2)/4 * (1 - z^2/8)",
        "-i * sqrt(2)/4 * (1 + z^2/8)",
        "sqrt(2)/4 * sqrt(2)*z/2",
    ]
    vals = [evaluate(parse(s), 0.0) for s in entries]
    s24 = math.sqrt(2) / 4
    assert vals[0] == pytest.approx(s24)
    assert vals[1] == pytest.approx(-1j * s24)
    assert vals[2] == 0.0


def test_diff_constant():
    d = differentiate(parse("5"))
    assert evaluate(d, 0.3) == 0.0


def _check_derivative(text, points, rtol=1e-6):
    e = parse(text)
    d = differentiate(e)
    h = 1e-5
    for x in points:
        fd = (evaluate(e, x + h) - evaluate(e, x - h)) / (2 * h)
        got = evaluate(d, x)
        assert got == pytest.approx(fd, rel=rtol, abs=1e-8)


def test_diff_exponential():
    pts = np.linspace(-2.0, 2.0, 10)
    _check_derivative("e^(0.1*u)", pts, rtol=1e-8)
    # closed form 0.1*e^(0.1u)
    d = differentiate(parse("e^(0.1*u)"))
    for x in pts:
        assert evaluate(d, x) == pytest.approx(0.1 * math.exp(0.1 * x), rel=1e-14)


def test_diff_squared_cosine_profile():
    _check_derivative("2*cos(2*u)^2", np.linspace(-3, 3, 10))


def test_diff_misc_against_finite_differences():
    for text in ["sinh(u)*cos(u)", "sqrt(1 + u^2)", "u^3 - 2/u", "exp(sin(u))"]:
        _check_derivative(text, [0.4, 1.1, -0.7, 2.2])


def test_real_coefficients_stay_real_on_axis():
    for text in ["sin(u) + e^(0.1*u)", "2*cos(2*u)^2", "u^4/7 - sqrt(u^2 + 1)"]:
        assert is_real_on_axis(parse(text))
    assert not is_real_on_axis(parse("i*u"))


def test_schwarz_reflection_real_coefficients():
    e = parse("sin(u) + e^(0.1*u) - u^3/5")
    rng = np.random.default_rng(9)
    for _ in range(25):
        z = complex(rng.standard_normal(), rng.standard_normal())
        assert evaluate(e, z.conjugate()) == pytest.approx(
            evaluate(e, z).conjugate(), rel=1e-13, abs=1e-13
        )


def test_conj_expr_complex_coefficients():
    e = parse("cos(3*u) + i*(1 + 0.3*u)")
    ec = conj_expr(e)
    rng = np.random.default_rng(13)
    for _ in range(25):
        z = complex(rng.standard_normal(), rng.standard_normal())
        assert evaluate(ec, z) == pytest.approx(
            evaluate(e, z.conjugate()).conjugate(), rel=1e-13, abs=1e-13
        )


def test_vectorized_matches_scalar():
    e = parse("sin(u)*e^(0.2*u) + u^2 - i*u")
    zs = np.array([0.1 + 0.2j, -1.0, 2.5 - 0.3j, 0.0])
    vec = evaluate(e, zs)
    assert vec.shape == zs.shape
    for k, z in enumerate(zs):
        assert vec[k] == pytest.approx(evaluate(e, complex(z)), abs=1e-14)


def test_parse_errors_carry_offsets():
    with pytest.raises(ParseError) as err:
        parse("sin(u) + $")
    assert err.value.offset == 9
    with pytest.raises(ParseError) as err:
        parse("cos(w)")
    assert err.value.offset == 4
    with pytest.raises(ParseError):
        parse("u^1.5")
    with pytest.raises(ParseError):
        parse("sin u")  # juxtaposition is not function application
    with pytest.raises(ParseError):
        parse("(1 + u")


def test_negative_integer_power():
    e = parse("1 - 1/z^2")
    assert evaluate(e, 1.0) == 0.0
    e2 = parse("z^(-2)")
    assert evaluate(e2, 2.0) == pytest.approx(0.25)


def test_scalar_division_by_zero_raises():
    with pytest.raises(ZeroDivisionError):
        evaluate(parse("1/u"), 0.0)
    with pytest.raises(ZeroDivisionError):
        evaluate(parse("u^(-1)"), 0.0)


def test_sqrt_branch_cut_flagged():
    with pytest.warns(SqrtBranchWarning):
        evaluate(parse("sqrt(u)"), -4.0)
    # principal branch: off-axis arguments stay quiet
    val = evaluate(parse("sqrt(u)"), -4.0 + 1e-12j)
    assert val.imag > 0


def test_ensure_expr_coercions():
    assert evaluate(ensure_expr(2.5), 9.0) == 2.5
    assert evaluate(ensure_expr("u + 1"), 1.0) == 2.0
    e = parse("u")
    assert ensure_expr(e) is e
