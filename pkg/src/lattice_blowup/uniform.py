"""Spatially uniform reduction and the continuous comparison ODE.

With constant data every lattice point carries the same value and the
scheme collapses to the scalar recurrence

    u[t+1] + u[t-1] = 4 u[t] / (2 - delta^2 sign(u[t]) |u[t]|^(p-1)),
    u[0] = 0, u[1] = g.

The continuous counterpart ``u'' = |u|^p`` satisfies a closed-form lower
bound anchored at ``(eps, u(eps))`` that diverges at a computable time.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import IO, Iterable, Optional, Sequence

from ._numeric import signed_pow


@dataclass
class UniformTrajectory:
    g: object
    p: float
    delta: object
    values: list
    blowup_step: Optional[int]
    threshold: float
    exact: bool = False

    def __post_init__(self):
        if len(self.values) < 2 or self.values[0] != 0 or self.values[1] != self.g:
            raise ValueError("trajectory must start with u0 = 0, u1 = g")


def _reached(u, p, delta, thr, exact: bool) -> bool:
    if exact:
        # u >= (2/delta^2)^(1/(p-1))  <=>  delta^2 u^(p-1) >= 2  for u > 0
        return u > 0 and delta * delta * u ** (int(p) - 1) >= 2
    return u >= thr


def iterate_uniform(g, p, delta, max_steps: int = 1_000_000, exact: bool = False) -> UniformTrajectory:
    """Iterate the uniform recurrence from (0, g) until u reaches the threshold.

    ``blowup_step`` is the first tau with ``u[tau] >= (2/delta^2)^(1/(p-1))``,
    or None when ``max_steps`` values were produced without reaching it.
    With ``exact=True`` g and delta are converted to Fractions and p must be
    an integer.
    """
    if not g > 0:
        raise ValueError("g must be positive")
    if not p > 1:
        raise ValueError("p must exceed 1")
    if not delta > 0:
        raise ValueError("delta must be positive")
    thr = (2.0 / float(delta) ** 2) ** (1.0 / (float(p) - 1.0))
    if exact:
        if not float(p).is_integer():
            raise ValueError("exact arithmetic needs an integer exponent p")
        g, delta = Fraction(g), Fraction(delta)
        zero, two, four = Fraction(0), Fraction(2), Fraction(4)
        dd = delta * delta
    else:
        g, delta = float(g), float(delta)
        zero, two, four = 0.0, 2.0, 4.0
        dd = delta * delta
    vals = [zero, g]
    e = p - 1
    tau = 1
    blow = None
    while True:
        u = vals[tau]
        if _reached(u, p, delta, thr, exact):
            blow = tau
            break
        if tau >= max_steps:
            break
        vals.append(four * u / (two - dd * signed_pow(u, e)) - vals[tau - 1])
        tau += 1
    return UniformTrajectory(g=g, p=p, delta=delta, values=vals, blowup_step=blow, threshold=thr, exact=exact)


def linear_lower_bound_check(traj: UniformTrajectory) -> bool:
    """True when ``u[tau] > g*tau`` for every 2 <= tau < blowup_step.

    At tau = 1 the bound is an equality, so it is not tested.
    """
    end = traj.blowup_step if traj.blowup_step is not None else len(traj.values)
    return all(traj.values[t] > traj.g * t for t in range(2, end))


def second_differences(traj: UniformTrajectory) -> list:
    end = traj.blowup_step if traj.blowup_step is not None else len(traj.values) - 1
    v = traj.values
    return [v[t + 1] - 2 * v[t] + v[t - 1] for t in range(1, min(end, len(v) - 1))]


def iterate_naive_uniform(g, p, delta, steps: int, exact: bool = False, max_bits: Optional[int] = None) -> list:
    """``u[t+1] = 2u[t] - u[t-1] + delta^2 |u[t]|^p`` from (0, g).

    Produces ``steps + 1`` values u[0..steps].  No threshold exists for this
    recurrence.  In exact mode the bit length of every numerator and
    denominator is capped by ``max_bits``; exceeding it raises
    :class:`ExactSizeExceeded` carrying the values computed so far.
    """
    if exact:
        if not float(p).is_integer():
            raise ValueError("exact arithmetic needs an integer exponent p")
        g, dd = Fraction(g), Fraction(delta) ** 2
        vals = [Fraction(0), g]
        k = int(p)
    else:
        g, dd = float(g), float(delta) ** 2
        vals = [0.0, g]
    for t in range(1, steps):
        u = vals[t]
        try:
            src = abs(u) ** k if exact else abs(u) ** p
        except OverflowError:
            src = math.inf
        nxt = 2 * u - vals[t - 1] + dd * src
        if exact and max_bits is not None:
            bits = max(nxt.numerator.bit_length(), nxt.denominator.bit_length())
            if bits > max_bits:
                raise ExactSizeExceeded(t + 1, bits, vals)
        if not exact and not math.isfinite(nxt):
            vals.append(nxt)
            break
        vals.append(nxt)
    return vals[: steps + 1]


class ExactSizeExceeded(RuntimeError):
    """Exact iteration stopped because a rational outgrew the bit budget."""

    def __init__(self, step: int, bits: int, values: list):
        super().__init__(f"value u[{step}] needs {bits} bits")
        self.step = step
        self.bits = bits
        self.values = values


def write_uniform_csv(traj: UniformTrajectory, fp: IO[str]) -> None:
    """CSV with columns tau,u,threshold,gap where gap = threshold - u."""
    w = csv.writer(fp, lineterminator="\n")
    w.writerow(["tau", "u", "threshold", "gap"])
    for t, u in enumerate(traj.values):
        w.writerow([t, _fmt(u), repr(traj.threshold), _fmt(traj.threshold - float(u))])


def _fmt(x) -> str:
    if isinstance(x, Fraction):
        return str(x)
    return repr(float(x))


# -- continuous comparison ---------------------------------------------------


@dataclass(frozen=True)
class ContinuousBoundParams:
    """Anchor of the continuous lower bound: alpha = (p-1)/2, C = sqrt(2/(p+1))."""

    alpha: float
    C: float
    epsilon: float
    u_eps: float

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")
        if not 0 < self.C < 1:
            raise ValueError("C must lie in (0, 1)")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if not self.u_eps > 0:
            raise ValueError("u(epsilon) must be positive")

    @classmethod
    def for_exponent(cls, p: float, epsilon: float, u_eps: float) -> "ContinuousBoundParams":
        if not p > 1:
            raise ValueError("p must exceed 1")
        return cls(alpha=(p - 1) / 2, C=math.sqrt(2 / (p + 1)), epsilon=epsilon, u_eps=u_eps)

    @property
    def p(self) -> float:
        return 2 * self.alpha + 1


def continuous_blowup_upper_time(params: ContinuousBoundParams) -> float:
    """Time at which the lower bound diverges: eps + u(eps)^(-alpha) / (alpha C)."""
    a, c = params.alpha, params.C
    return params.u_eps ** (-a) / (a * c) + params.epsilon


def continuous_lower_bound(t: float, params: ContinuousBoundParams) -> float:
    """Lower bound for the solution of ``u'' = |u|^p`` at time t.

    Valid for eps <= t < T*; equals u(eps) at t = eps.
    """
    a, c, eps = params.alpha, params.C, params.epsilon
    t_star = continuous_blowup_upper_time(params)
    if not eps <= t < t_star:
        raise ValueError(f"t={t} outside [{eps}, {t_star})")
    ac = a * c
    denom = params.u_eps ** (-a) / ac + eps - t
    return ac ** (-1 / a) / denom ** (1 / a)


def _rk4_advance(p, t, u, w, t_end, step, cap):
    def f(u_, w_):
        try:
            return w_, abs(u_) ** p
        except OverflowError:
            return w_, math.inf

    while t < t_end:
        dt = min(step, t_end - t)
        k1u, k1w = f(u, w)
        k2u, k2w = f(u + 0.5 * dt * k1u, w + 0.5 * dt * k1w)
        k3u, k3w = f(u + 0.5 * dt * k2u, w + 0.5 * dt * k2w)
        k4u, k4w = f(u + dt * k3u, w + dt * k3w)
        u += dt * (k1u + 2 * k2u + 2 * k3u + k4u) / 6
        w += dt * (k1w + 2 * k2w + 2 * k3w + k4w) / 6
        t += dt
        if not math.isfinite(u) or abs(u) > cap:
            return t, u, w, True
    return t, u, w, False


def rk4_state(p: float, t0: float, u0: float, du0: float, t1: float, step: float = 1e-5) -> tuple[float, float]:
    """``(u(t1), u'(t1))`` for ``u'' = |u|^p`` by classic RK4; raises if u diverges first."""
    if t1 < t0:
        raise ValueError("t1 must not precede t0")
    _, u, w, diverged = _rk4_advance(p, float(t0), float(u0), float(du0), float(t1), step, math.inf)
    if diverged:
        raise OverflowError("solution diverged before t1")
    return u, w


def rk4_ode1(
    p: float,
    t0: float,
    u0: float,
    du0: float,
    targets: Sequence[float],
    step: float = 1e-5,
    cap: float = 1e150,
) -> list[float]:
    """Classic fourth-order Runge-Kutta for ``u'' = |u|^p``.

    Returns u at each target time (sorted ascending, all >= t0).  Once |u|
    exceeds ``cap`` the solution is treated as having diverged and later
    targets get ``inf``.
    """
    out: list[float] = []
    t, u, w = float(t0), float(u0), float(du0)
    diverged = False
    for target in targets:
        if target < t - 1e-15:
            raise ValueError("targets must be ascending and not before t0")
        if not diverged:
            t, u, w, diverged = _rk4_advance(p, t, u, w, float(target), step, cap)
        out.append(math.inf if diverged else u)
    return out


# -- exponents -----------------------------------------------------------------


def critical_exponent(d: int) -> float:
    """``(d + 1 + sqrt(d^2 + 10d - 7)) / (2(d - 1))`` for d >= 2."""
    if d < 2:
        raise ValueError("critical exponent needs d >= 2")
    return (d + 1 + math.sqrt(d * d + 10 * d - 7)) / (2 * (d - 1))


def kato_exponent(d: int) -> float:
    """``(d + 1)/(d - 1)``; +inf for d = 1 where any p > 1 is admissible."""
    if d < 1:
        raise ValueError("d must be at least 1")
    if d == 1:
        return math.inf
    return (d + 1) / (d - 1)


def exponent_table(dims: Iterable[int] = range(2, 11)) -> list[dict]:
    return [{"d": d, "critical": critical_exponent(d), "kato": kato_exponent(d)} for d in dims]
