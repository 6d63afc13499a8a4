"""Small numeric helpers shared by the stepping and oracle modules."""

from __future__ import annotations

import math
from fractions import Fraction

import numpy as np


def _is_integer(x) -> bool:
    return float(x).is_integer()


def signed_pow(x, e):
    """``sign(x) * |x|**e`` for scalars, Fractions and arrays.

    Integer exponents are evaluated by repeated multiplication, so Fractions
    stay exact and float results match the compiled kernels.
    """
    if isinstance(x, np.ndarray):
        if x.dtype == object:
            return np.array([signed_pow(v, e) for v in x.reshape(-1)], dtype=object).reshape(x.shape)
        if e == 1:
            return x.copy()
        a = np.abs(x)
        if e == 2:
            return np.sign(x) * (a * a)
        return np.sign(x) * a**e
    if isinstance(x, Fraction):
        if not _is_integer(e):
            raise ValueError("exact arithmetic needs an integer exponent")
        k = int(e)
        m = abs(x) ** k
        return m if x >= 0 else -m
    x = float(x)
    if e == 1:
        return x
    a = abs(x)
    m = a * a if e == 2 else a**e
    return math.copysign(m, x) if x != 0 else 0.0
