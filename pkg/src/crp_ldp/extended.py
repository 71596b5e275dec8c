"""Extended reals: floats that may be +inf or -inf, with guarded addition."""

from __future__ import annotations

import math


class ExtendedArithmeticError(ArithmeticError):
    """Raised on the undefined combination (+inf) + (-inf)."""


class ExtendedValue(float):
    """A float in [-inf, +inf] that refuses to form inf - inf.

    Ordering is inherited from ``float`` and is total because NaN is rejected
    at construction time.
    """

    def __new__(cls, value=0.0):
        v = float(value)
        if math.isnan(v):
            raise ExtendedArithmeticError("NaN is not an extended real")
        return super().__new__(cls, v)

    @property
    def is_finite(self) -> bool:
        return math.isfinite(self)

    @property
    def is_pos_inf(self) -> bool:
        return self == math.inf

    @property
    def is_neg_inf(self) -> bool:
        return self == -math.inf

    def __add__(self, other):
        o = float(other)
        if math.isinf(self) and math.isinf(o) and (self > 0) != (o > 0):
            raise ExtendedArithmeticError("(+inf) + (-inf) is undefined")
        return ExtendedValue(float(self) + o)

    __radd__ = __add__

    def __sub__(self, other):
        return self.__add__(-float(other))

    def __rsub__(self, other):
        return ExtendedValue(-float(self)).__add__(other)

    def __neg__(self):
        return ExtendedValue(-float(self))

    def __mul__(self, other):
        o = float(other)
        if (math.isinf(self) and o == 0.0) or (math.isinf(o) and float(self) == 0.0):
            raise ExtendedArithmeticError("0 * inf is undefined")
        return ExtendedValue(float(self) * o)

    __rmul__ = __mul__

    def __repr__(self) -> str:
        return f"ExtendedValue({float(self)!r})"


POS_INF = ExtendedValue(math.inf)
NEG_INF = ExtendedValue(-math.inf)


def ext(value) -> ExtendedValue:
    return value if isinstance(value, ExtendedValue) else ExtendedValue(value)
