from __future__ import annotations

import random
from decimal import Decimal
from fractions import Fraction

import gmpy2
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from shadowham import xnum
from shadowham.xnum import (DomainError, PrecisionError, format_decimal, nth_root, parse_decimal,
                            set_working_precision, working_precision, xreal)


def test_precision_context_sizes():
    set_working_precision(120)
    assert xnum.get_working_precision() == 120
    assert gmpy2.get_context().precision >= 399  # 120 * log2(10) ~ 398.6
    set_working_precision(16)
    assert xnum.get_working_precision() == 16
    assert gmpy2.get_context().precision >= 54


def test_precision_below_minimum_rejected():
    with pytest.raises(PrecisionError):
        set_working_precision(8)
    with pytest.raises(TypeError):
        set_working_precision(30.0)


def test_working_precision_restores():
    with working_precision(40):
        assert xnum.get_working_precision() == 40
    assert xnum.get_working_precision() == 120


def test_parse_examples():
    assert parse_decimal("0.5") == Fraction(1, 2)
    x = parse_decimal("-1e-3")
    assert abs(x + xreal("1/1000")) <= abs(x) * gmpy2.mpfr(2) ** (1 - xnum.working_bits())
    assert format_decimal(x, 120) == "-1." + "0" * 119 + "e-03"
    for bad in ("abc", "", "1.2.3", "e5", "--1", "1e"):
        with pytest.raises(ValueError):
            parse_decimal(bad)


def test_nth_root_examples():
    assert nth_root(xreal(4), 2) == 2
    assert nth_root(xreal(8), 3) == 2
    assert nth_root(xreal(-8), 3) == -2
    with pytest.raises(DomainError):
        nth_root(xreal(-1), 2)


def test_nth_root_within_one_ulp():
    rng = random.Random(7)
    for _ in range(50):
        x = xreal(Fraction(rng.randint(1, 10**12), rng.randint(1, 10**6)))
        n = rng.randint(2, 9)
        y = nth_root(x, n)
        # relative error of y^n is at most ~n ulps of y, plus rounding of the power
        rel = abs(y**n - x) / x
        assert rel <= (n + 2) * gmpy2.mpfr(2) ** (1 - xnum.working_bits())


def test_xreal_rejects_binary_float():
    with pytest.raises(TypeError):
        xreal(0.1)
    assert abs(xreal("1/3") * 3 - 1) < gmpy2.mpfr(10) ** -119


def _random_decimal(rng: random.Random, digits: int) -> str:
    nd = rng.randint(1, digits)
    mant = str(rng.randint(1, 9)) + "".join(rng.choice("0123456789") for _ in range(nd - 1))
    point = rng.randint(1, nd)
    exp = rng.randint(-60, 60)
    sign = rng.choice(["", "-", "+"])
    return f"{sign}{mant[:point]}.{mant[point:]}e{exp}"


def test_roundtrip_thousand_random_strings():
    rng = random.Random(2024)
    P = xnum.get_working_precision()
    for _ in range(1000):
        s = _random_decimal(rng, P)
        x = parse_decimal(s)
        # the value of the string is recovered when formatting at P digits
        assert Decimal(format_decimal(x, P)) == Decimal(s), s
        # and the binary value survives a default-width round trip
        assert parse_decimal(format_decimal(x)) == x


@settings(max_examples=200, deadline=None)
@given(st.fractions(min_value=-10**6, max_value=10**6), st.integers(min_value=16, max_value=200))
def test_roundtrip_any_precision(value, digits):
    with working_precision(digits):
        x = xreal(value)
        assert parse_decimal(format_decimal(x)) == x


def test_determinism():
    def graph():
        acc = xreal(0)
        for k in range(1, 200):
            acc += gmpy2.sin(xreal(k)) / nth_root(xreal(k), 3)
        return format_decimal(acc)

    assert graph() == graph()


def test_precision_monotonicity():
    inputs = [(xreal(2), 2), (xreal(3), 3), (xreal("10.5"), 5), (xreal("1/7"), 7)]
    for x_s, n in inputs:
        text = format_decimal(x_s, 150)
        with working_precision(60):
            x = parse_decimal(text)
            lo = abs(nth_root(x, n) ** n - x)
        with working_precision(120):
            x = parse_decimal(text)
            hi = abs(nth_root(x, n) ** n - x)
        assert hi <= lo


def test_format_zero_and_width():
    assert format_decimal(xreal(0), 3) == "0.00e+00"
    assert format_decimal(xreal(1000), 4) == "1.000e+03"
    with pytest.raises(ValueError):
        format_decimal(xreal(1), 1)
