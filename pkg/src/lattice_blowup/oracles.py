"""Scalar inequalities behind the blow-up argument, with randomized checks.

``h(x) = 2|x|^p / (1 - x|x|^(p-2))`` is the per-point production term of the
scaled scheme: summing ``u_next - 2v + u_prev`` over the lattice gives
``sum h(v)``.  The helpers here evaluate h, the Jensen-type gap for convex
combinations with ordered nodes, second differences of h, and the auxiliary
polynomial ``phi``.  Integer p with Fraction arguments is exact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, asdict
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np

from ._numeric import signed_pow

JENSEN_TOL = 1e-12


def h(x, p):
    """``2|x|^p / (1 - sign(x)|x|^(p-1))`` for x < 1.

    Accepts floats, Fractions (integer p only) and float arrays.
    """
    if isinstance(x, np.ndarray) and x.dtype != object:
        if np.any(x >= 1):
            raise ValueError("h is defined only for x < 1")
        s = signed_pow(x, p - 1)
        return 2.0 * np.abs(x) * np.abs(s) / (1.0 - s)
    if x >= 1:
        raise ValueError("h is defined only for x < 1")
    s = signed_pow(x, p - 1)
    return 2 * abs(x) * abs(s) / (1 - s)


def phi(lam, p):
    """``lam^(p+1)/(p+1) - lam + 1 - 1/(p+1)`` on [0, 1].

    Grouped as ``(lam^(p+1) - 1)/(p+1) + (1 - lam)`` so phi(1) is exactly 0.
    """
    if not 0 <= lam <= 1:
        raise ValueError("phi is defined on [0, 1]")
    if isinstance(lam, Fraction):
        k = int(p) + 1
        if k != p + 1:
            raise ValueError("exact arithmetic needs an integer exponent")
        return (lam**k - 1) / k + (1 - lam)
    return (lam ** (p + 1) - 1.0) / (p + 1) + (1.0 - lam)


@dataclass(frozen=True)
class ConvexComboInstance:
    """Ordered nodes x_0 <= ... <= x_s < 1 with 0 <= x_0, weights summing to 1.

    The weighted mean must be nonnegative.  Invalid instances are rejected.
    """

    p: float
    xs: tuple
    lambdas: tuple

    def __post_init__(self):
        xs, ls = tuple(self.xs), tuple(self.lambdas)
        object.__setattr__(self, "xs", xs)
        object.__setattr__(self, "lambdas", ls)
        if not self.p > 1:
            raise ValueError("p must exceed 1")
        if not xs or len(xs) != len(ls):
            raise ValueError("need as many weights as nodes")
        if not 0 <= xs[0] < 1:
            raise ValueError("x_0 must lie in [0, 1)")
        if any(b < a for a, b in zip(xs, xs[1:])):
            raise ValueError("nodes must be nondecreasing")
        if any(x >= 1 for x in xs):
            raise ValueError("nodes must be below 1")
        if any(w < 0 for w in ls):
            raise ValueError("weights must be nonnegative")
        total = sum(ls)
        exact = all(isinstance(w, (int, Fraction)) for w in ls)
        if (total != 1) if exact else abs(total - 1) > 1e-12:
            raise ValueError("weights must sum to 1")
        if self.mean < 0:
            raise ValueError("weighted mean must be nonnegative")

    @property
    def mean(self):
        return sum(w * x for w, x in zip(self.lambdas, self.xs))


def jensen_gap(inst: ConvexComboInstance):
    """``sum lambda_j h(x_j) - h(sum lambda_j x_j)``; nonnegative for valid instances."""
    lhs = sum(w * h(x, inst.p) for w, x in zip(inst.lambdas, inst.xs))
    return lhs - h(inst.mean, inst.p)


def convexity_scan(p: float, grid_step: float, lo: float = 0.0, hi: Optional[float] = None) -> float:
    """Smallest second difference ``h(x-s) - 2h(x) + h(x+s)`` over a grid.

    Centres run over ``lo + s, lo + 2s, ...`` while ``x + s`` stays at or
    below ``hi`` (default ``1 - grid_step``).
    """
    if not 0 < grid_step < 1:
        raise ValueError("grid_step must lie in (0, 1)")
    if hi is None:
        hi = 1.0 - grid_step
    n = int(math.floor((hi - lo) / grid_step + 1e-9))
    if n < 2:
        raise ValueError("grid too coarse for the interval")
    x = lo + grid_step * np.arange(n + 1)
    hx = h(x, p)
    d2 = hx[:-2] - 2.0 * hx[1:-1] + hx[2:]
    return float(d2.min())


@dataclass
class LemmaSuiteResult:
    suite: str
    cases: int
    min_gap: float
    worst_instance: dict
    lambda0_zero: int
    draws: int

    def summary(self) -> dict:
        return asdict(self)


def _h_rows(x: np.ndarray, p: np.ndarray) -> np.ndarray:
    s = np.sign(x) * np.abs(x) ** (p - 1.0)
    return 2.0 * np.abs(x) * np.abs(s) / (1.0 - s)


def random_lemma_suite(
    cases: int = 100_000,
    seed: int = 0,
    max_s: int = 8,
    p_range: tuple[float, float] = (1.0, 3.0),
    value_range: tuple[float, float] = (-0.99, 0.99),
    batch: int = 20_000,
) -> LemmaSuiteResult:
    """Jensen-gap check on random valid instances.

    Each draw picks s in 1..max_s, p in (p_lo, p_hi], s+1 node values from
    ``value_range`` (sorted) and Dirichlet(1) weights.  Draws with a negative
    smallest node or negative mean are discarded until ``cases`` valid
    instances were checked.  Draws whose first weight is exactly 0 are
    counted separately and not scored.
    """
    rng = np.random.default_rng(seed)
    lo_p, hi_p = p_range
    done = 0
    draws = 0
    lambda0_zero = 0
    best = math.inf
    worst: dict = {}
    while done < cases:
        s_draw = rng.integers(1, max_s + 1, size=batch)
        p_draw = hi_p - (hi_p - lo_p) * rng.random(batch)
        draws += batch
        for s in range(1, max_s + 1):
            rows = np.flatnonzero(s_draw == s)
            if rows.size == 0:
                continue
            xs = np.sort(rng.uniform(*value_range, size=(rows.size, s + 1)), axis=1)
            ws = rng.dirichlet(np.ones(s + 1), size=rows.size)
            ps = p_draw[rows][:, None]
            mean = np.sum(ws * xs, axis=1)
            ok = (xs[:, 0] >= 0) & (mean >= 0)
            zero0 = ok & (ws[:, 0] == 0)
            lambda0_zero += int(zero0.sum())
            ok &= ~zero0
            if not np.any(ok):
                continue
            xs, ws, ps, mean = xs[ok], ws[ok], ps[ok], mean[ok]
            room = cases - done
            if xs.shape[0] > room:
                xs, ws, ps, mean = xs[:room], ws[:room], ps[:room], mean[:room]
            gaps = np.sum(ws * _h_rows(xs, ps), axis=1) - _h_rows(mean, ps[:, 0])
            j = int(np.argmin(gaps))
            if gaps[j] < best:
                best = float(gaps[j])
                worst = {"p": float(ps[j, 0]), "xs": xs[j].tolist(), "lambdas": ws[j].tolist()}
            done += xs.shape[0]
            if done >= cases:
                break
    return LemmaSuiteResult("lemma", done, best, worst, lambda0_zero, draws)


def convexity_suite(ps: Sequence[float] = (1.1, 1.5, 2.0, 3.0), grid_step: float = 1e-3, hi: float = 0.999) -> dict:
    mins = {str(p): convexity_scan(p, grid_step, hi=hi) for p in ps}
    worst_p = min(mins, key=mins.get)
    return {"suite": "convexity", "cases": len(ps), "min_gap": mins[worst_p],
            "worst_instance": {"p": float(worst_p), "grid_step": grid_step}, "per_p": mins}


def phi_suite(ps: Sequence[float] = (1.1, 2.0, 3.0), grid_step: float = 1e-4) -> dict:
    """phi on a uniform grid of [0, 1]: minimum below 1, and the value at 1."""
    n = int(round(1.0 / grid_step))
    lam = np.arange(n + 1) / n
    interior_min = math.inf
    at_one = {}
    worst = {}
    for p in ps:
        vals = (lam ** (p + 1) - 1.0) / (p + 1) + (1.0 - lam)
        m = float(vals[:-1].min())
        if m < interior_min:
            interior_min = m
            worst = {"p": p, "lambda": float(lam[:-1][np.argmin(vals[:-1])])}
        at_one[str(p)] = float(vals[-1])
    return {"suite": "phi", "cases": len(ps) * (n + 1), "min_gap": interior_min,
            "worst_instance": worst, "at_one": at_one}
