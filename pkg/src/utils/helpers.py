"""
Utility helper functions for exact rational parsing, formatting and reporting.
"""

import math
import re
from fractions import Fraction

import numpy as np

_RATIONAL_PATTERN = re.compile(r'^\s*[-+]?(\d+(\.\d*)?|\.\d+)([eE][-+]?\d+)?(\s*/\s*\d+)?\s*$')


def to_fraction(value):
    """
    Convert a rational literal to an exact Fraction.

    Args:
        value: int, Fraction, or string in "p/q" or decimal form ("0.25", "3", "1/3")

    Returns:
        Fraction equal to the literal

    Raises:
        ValueError: if the value is not a finite rational literal
    """
    if isinstance(value, bool):
        raise ValueError(f"Not a rational literal: {value!r}")
    if isinstance(value, Fraction):
        return value
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, float):
        if not math.isfinite(value):
            raise ValueError(f"Not a finite rational: {value!r}")
        # Through repr so 0.1 becomes 1/10, not its binary expansion.
        return Fraction(repr(value))
    if isinstance(value, str):
        if not _RATIONAL_PATTERN.match(value):
            raise ValueError(f"Not a rational literal: {value!r}")
        cleaned = value.replace(' ', '')
        try:
            return Fraction(cleaned)
        except ZeroDivisionError:
            raise ValueError(f"Zero denominator in {value!r}")
    raise ValueError(f"Not a rational literal: {value!r}")


def format_fraction(value):
    """Format a rational as "p/q" (or "p" for integers); floats and infinities pass through."""
    if isinstance(value, Fraction):
        return str(value)
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float) and math.isinf(value):
        return 'inf' if value > 0 else '-inf'
    return value


def to_jsonable(value):
    """
    Recursively convert a report structure into JSON-serializable values.

    Fractions become "p/q" strings, infinities become "inf", numpy scalars
    become Python numbers, tuples and sets become lists. Plain ints (sides,
    counts) stay numbers.
    """
    if isinstance(value, dict):
        return {str(k): to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(v) for v in value]
    if isinstance(value, (set, frozenset)):
        return sorted(to_jsonable(v) for v in value)
    if isinstance(value, Fraction):
        return format_fraction(value)
    if isinstance(value, np.generic):
        return to_jsonable(value.item())
    if isinstance(value, float):
        return format_fraction(value) if math.isinf(value) else value
    return value


def positive_part(value):
    """Return max(value, 0) preserving the numeric type."""
    return value if value > 0 else value * 0


def is_infinite(value):
    """True for the +inf/-inf float sentinels used as extended values."""
    return isinstance(value, float) and math.isinf(value)


def approx_le(lhs, rhs, tol):
    """
    Compare lhs <= rhs exactly for rationals, with tolerance once floats appear.

    Args:
        lhs: Left-hand value (Fraction, int or float, possibly infinite)
        rhs: Right-hand value
        tol: Absolute tolerance applied only when either side is a float

    Returns:
        bool
    """
    if rhs == math.inf or lhs == -math.inf:
        return True
    if lhs == math.inf or rhs == -math.inf:
        return False
    if isinstance(lhs, float) or isinstance(rhs, float):
        return float(lhs) <= float(rhs) + tol
    return lhs <= rhs
