"""Extended-precision real arithmetic.

Every quantity in the package is a :class:`gmpy2.mpfr` created under one
process-wide working precision, expressed in decimal digits.  A few guard
bits are carried on top of ``ceil(digits * log2(10))`` so that any decimal
string of at most ``digits`` significant digits survives a parse/format round
trip unchanged.
"""

from __future__ import annotations

import contextlib
import math
import re
from fractions import Fraction
from typing import Iterator, Union

import gmpy2
from gmpy2 import mpfr

XReal = mpfr

MIN_DIGITS = 16
DEFAULT_DIGITS = 120
GUARD_BITS = 4

_LOG2_10 = math.log2(10)
_DECIMAL_RE = re.compile(r"^[+-]?(\d+\.?\d*|\.\d+)([eE][+-]?\d+)?$")

_digits = DEFAULT_DIGITS


class PrecisionError(ValueError):
    """Requested working precision is below the supported minimum."""


class DomainError(ValueError):
    """Argument outside the domain of a real-valued function."""


def _bits_for(digits: int) -> int:
    return math.ceil(digits * _LOG2_10) + GUARD_BITS


def set_working_precision(digits: int) -> gmpy2.context:
    """Fix the number of decimal digits carried by all new values.

    Returns the active gmpy2 context.  Raises :class:`PrecisionError` for
    ``digits < 16``.
    """
    global _digits
    if isinstance(digits, bool) or not isinstance(digits, int):
        raise TypeError(f"digits must be an integer, got {digits!r}")
    if digits < MIN_DIGITS:
        raise PrecisionError(f"working precision must be at least {MIN_DIGITS} digits, got {digits}")
    ctx = gmpy2.context(precision=_bits_for(digits), round=gmpy2.RoundToNearest)
    gmpy2.set_context(ctx)
    _digits = digits
    return gmpy2.get_context()


def get_working_precision() -> int:
    return _digits


def working_bits() -> int:
    return gmpy2.get_context().precision


@contextlib.contextmanager
def working_precision(digits: int) -> Iterator[gmpy2.context]:
    """Temporarily switch the working precision (mostly for tests)."""
    previous = _digits
    try:
        yield set_working_precision(digits)
    finally:
        set_working_precision(previous)


def roundtrip_digits() -> int:
    """Significant digits needed for ``parse(format(x)) == x`` on any value."""
    return math.ceil(working_bits() * math.log10(2)) + 1


def parse_decimal(s: str) -> mpfr:
    """Parse a signed decimal literal (optional exponent) to the nearest value."""
    if not isinstance(s, str) or not _DECIMAL_RE.match(s.strip()):
        raise ValueError(f"malformed decimal literal: {s!r}")
    return mpfr(s.strip())


def format_decimal(x: mpfr, digits: int | None = None) -> str:
    """Scientific-notation string with ``digits`` significant digits.

    The default digit count is large enough for an exact round trip through
    :func:`parse_decimal`.
    """
    if digits is None:
        digits = roundtrip_digits()
    if digits < 2:
        raise ValueError("need at least two significant digits")
    x = mpfr(x)
    if not gmpy2.is_finite(x):
        return str(x)
    mant, exp, _prec = x.digits(10, digits)
    sign = "-" if mant.startswith("-") else ""
    mant = mant.lstrip("-")
    if x == 0:
        mant, exp = "0" * digits, 1
    return f"{sign}{mant[0]}.{mant[1:]}e{exp - 1:+03d}"


def xreal(value: Union[int, str, Fraction, mpfr]) -> mpfr:
    """Convert an exact value to the working precision.

    Floats are rejected: they would silently inject 53-bit rounding error.
    """
    if isinstance(value, float):
        raise TypeError("refusing to convert a binary float; pass a string or Fraction")
    if isinstance(value, Fraction):
        return mpfr(value.numerator) / mpfr(value.denominator)
    if isinstance(value, str):
        if "/" in value:
            return xreal(Fraction(value))
        return parse_decimal(value)
    return mpfr(value)


def nth_root(x: mpfr, n: int) -> mpfr:
    """Real ``n``-th root, correctly rounded.  Odd roots of negatives are negative."""
    if n < 1:
        raise DomainError(f"root index must be positive, got {n}")
    x = mpfr(x)
    if x < 0 and n % 2 == 0:
        raise DomainError(f"even root ({n}) of negative number {x}")
    return gmpy2.rootn(x, n)




set_working_precision(DEFAULT_DIGITS)
