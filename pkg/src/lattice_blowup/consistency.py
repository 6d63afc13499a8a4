"""Truncation error of the proposed scheme on smooth manufactured functions.

For a smooth ``u(t, x)`` the lattice values are ``u(tau*delta, xi*n)`` with
``xi = sqrt(d) * delta``.  Plugging them into the scheme and subtracting the
continuous operator ``u_tt - Lap u - |u|^p`` (known in closed form for each
sampler) leaves a residual that should vanish like ``delta^2``.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field as dc_field
from itertools import product
from typing import IO, Callable, Optional, Sequence

import numpy as np

from ._numeric import signed_pow

NOISE_FLOOR = 100 * np.finfo(float).eps


@dataclass(frozen=True)
class SmoothSampler:
    """Closed-form test function with its second time derivative and Laplacian.

    Each callable takes ``(t, x)`` with ``x`` a length-d sequence.
    """

    name: str
    d: int
    u: Callable
    u_tt: Callable
    lap: Callable

    def pde_defect(self, t: float, x, p: float) -> float:
        """``u_tt - Lap u - |u|^p`` evaluated analytically."""
        val = self.u(t, x)
        return self.u_tt(t, x) - self.lap(t, x) - abs(val) ** p

    def self_test(self, t: float, x, step: float) -> float:
        """Largest gap between analytic derivatives and central differences with spacing ``step``."""
        x = np.asarray(x, dtype=float)
        u0 = self.u(t, x)
        ftt = (self.u(t + step, x) - 2 * u0 + self.u(t - step, x)) / step**2
        flap = 0.0
        for k in range(self.d):
            e = np.zeros(self.d)
            e[k] = step
            flap += (self.u(t, x + e) - 2 * u0 + self.u(t, x - e)) / step**2
        return max(abs(ftt - self.u_tt(t, x)), abs(flap - self.lap(t, x)))


def _r2(x) -> float:
    return float(np.dot(x, x))


def gaussian_cos(d: int, amp: float = 0.3, omega: float = 1.3) -> SmoothSampler:
    """``amp * exp(-|x|^2/2) * cos(omega t)``."""

    def u(t, x):
        return amp * math.exp(-_r2(x) / 2) * math.cos(omega * t)

    def u_tt(t, x):
        return -omega * omega * u(t, x)

    def lap(t, x):
        return (_r2(x) - d) * u(t, x)

    return SmoothSampler(f"gaussian_cos_d{d}", d, u, u_tt, lap)


def polynomial(d: int, amp: float = 0.2) -> SmoothSampler:
    """``amp * (1 + t^2/2 + t^4/24) * (1 + sum_k (x_k^2/4 + x_k^4/48))``."""

    def P(t):
        return 1 + t * t / 2 + t**4 / 24

    def Q(x):
        return 1 + sum(c * c / 4 + c**4 / 48 for c in x)

    def u(t, x):
        return amp * P(t) * Q(x)

    def u_tt(t, x):
        return amp * (1 + t * t / 2) * Q(x)

    def lap(t, x):
        return amp * P(t) * sum(0.5 + c * c / 4 for c in x)

    return SmoothSampler(f"polynomial_d{d}", d, u, u_tt, lap)


def linear_in_t(d: int, slope: float = 0.35) -> SmoothSampler:
    """``slope * t``: only the nonlinearity contributes to the residual."""

    def u(t, x):
        return slope * t

    def zero(t, x):
        return 0.0

    return SmoothSampler(f"linear_in_t_d{d}", d, u, zero, zero)


def zero_sampler(d: int) -> SmoothSampler:
    def zero(t, x):
        return 0.0

    return SmoothSampler(f"zero_d{d}", d, zero, zero, zero)


def catalog(dims: Sequence[int] = (1, 2)) -> list[SmoothSampler]:
    """Non-trivial samplers in every requested dimension."""
    return [f(d) for d in dims for f in (gaussian_cos, polynomial, linear_in_t)]


def default_points(d: int) -> list[tuple[float, tuple]]:
    """Fixed ``(t, x)`` sample set; t stays away from 0 so ``linear_in_t`` is nonzero."""
    ts = (0.5, 0.9, 1.3)
    axis = (-0.7, 0.0, 0.45)
    return [(t, x) for t in ts for x in product(axis, repeat=d)]


def _stencil(s: SmoothSampler, t: float, x, delta: float, p: float):
    x = np.asarray(x, dtype=float)
    if x.shape != (s.d,):
        raise ValueError(f"point must have {s.d} coordinates")
    xi = math.sqrt(s.d) * delta
    acc = 0.0
    for k in range(s.d):
        e = np.zeros(s.d)
        e[k] = xi
        acc += s.u(t, x + e) + s.u(t, x - e)
    v = acc / (2 * s.d)
    sv = signed_pow(v, p - 1)
    denom = 2 - delta * delta * sv
    if not denom > 0:
        raise ValueError("scheme denominator nonpositive at sample; use a smaller amplitude")
    two_level = s.u(t + delta, x) + s.u(t - delta, x)
    return two_level, v, sv, denom, s.pde_defect(t, x, p)


def scheme_residual(s: SmoothSampler, t: float, x, delta: float, p: float) -> float:
    """``u(t+d)+u(t-d) - 4v/(2 - d^2 s(v)) - d^2 * defect``; of order delta^4."""
    two, v, _, denom, defect = _stencil(s, t, x, delta, p)
    return two - 4 * v / denom - delta * delta * defect


def expansion_residual(s: SmoothSampler, t: float, x, delta: float, p: float) -> float:
    """Same as :func:`scheme_residual` with the nonlinearity truncated to ``v(2 + d^2 s(v))``."""
    two, v, sv, _, defect = _stencil(s, t, x, delta, p)
    return two - v * (2 + delta * delta * sv) - delta * delta * defect


def truncation_residual(s: SmoothSampler, t: float, x, delta: float, p: float) -> float:
    """PDE-form residual: time second difference minus lattice Laplacian minus the
    scheme's nonlinearity, minus the continuous defect.  Of order delta^2."""
    return scheme_residual(s, t, x, delta, p) / (delta * delta)


@dataclass
class ObservedOrder:
    sampler: str
    d: int
    p: float
    deltas: list
    max_residuals: list
    slope: Optional[float]
    status: str
    used: list = dc_field(default_factory=list)

    def summary(self) -> dict:
        return {"sampler": self.sampler, "d": self.d, "p": self.p, "slope": self.slope,
                "status": self.status, "deltas": self.deltas, "max_residuals": self.max_residuals}


def refinement_study(
    s: SmoothSampler,
    deltas: Sequence[float],
    points: Optional[Sequence] = None,
    p: float = 3.0,
    residual: Callable = truncation_residual,
) -> ObservedOrder:
    """Least-squares slope of log(max |residual|) against log(delta).

    ``deltas`` must hold at least three values, each half the previous.
    Maxima below ``NOISE_FLOOR`` are dropped; if none remain the status is
    ``"exact"``.
    """
    deltas = [float(x) for x in deltas]
    if len(deltas) < 3:
        raise ValueError("need at least three deltas")
    for a, b in zip(deltas, deltas[1:]):
        if not math.isclose(b, a / 2, rel_tol=1e-9):
            raise ValueError("each delta must be half the previous one")
    if points is None:
        points = default_points(s.d)
    maxima = [max(abs(residual(s, t, x, dl, p)) for t, x in points) for dl in deltas]
    used = [i for i, m in enumerate(maxima) if m >= NOISE_FLOOR]
    if not used:
        return ObservedOrder(s.name, s.d, p, deltas, maxima, None, "exact", used)
    if len(used) < 2:
        return ObservedOrder(s.name, s.d, p, deltas, maxima, None, "insufficient", used)
    lx = np.log([deltas[i] for i in used])
    ly = np.log([maxima[i] for i in used])
    slope = float(np.polyfit(lx, ly, 1)[0])
    return ObservedOrder(s.name, s.d, p, deltas, maxima, slope, "ok", used)


def write_consistency_csv(studies: Sequence[ObservedOrder], fp: IO[str]) -> None:
    """CSV with columns sampler,d,p,delta,max_residual."""
    w = csv.writer(fp, lineterminator="\n")
    w.writerow(["sampler", "d", "p", "delta", "max_residual"])
    for st in studies:
        for dl, m in zip(st.deltas, st.max_residuals):
            w.writerow([st.sampler, st.d, repr(float(st.p)), repr(dl), repr(float(m))])


def write_consistency_json(studies: Sequence[ObservedOrder], fp: IO[str]) -> None:
    json.dump({"studies": [st.summary() for st in studies]}, fp, indent=2, sort_keys=True)
    fp.write("\n")
