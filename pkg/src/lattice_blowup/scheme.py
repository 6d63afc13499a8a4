"""Time stepping for the blow-up preserving scheme and the naive scheme.

The proposed scheme advances a pair of slices by

    u_next + u_prev = 4 v / (2 - delta^2 v |v|^(p-2)),   v = M(u_curr)

where ``M`` is :func:`~lattice_blowup.field.neighbor_average`.  After the
change of variables ``u -> u / (2/delta^2)^(1/(p-1))`` it becomes

    u_next + u_prev = 2 v / (1 - v |v|^(p-2))

with blow-up threshold 1.  ``v |v|^(p-2)`` is always evaluated as
``sign(v) |v|^(p-1)`` so that ``v = 0`` is harmless for ``1 < p < 2``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field as dc_field, replace
from fractions import Fraction
from typing import Callable, Optional, Union

import numpy as np

from ._numeric import _is_integer, signed_pow
from .field import (
    Field,
    Point,
    _l1_grid,
    field_max,
    field_min,
    field_sum,
    l1_ball_count,
    neighbor_average,
    support_radius,
)
from .uniform import kato_exponent

log = logging.getLogger(__name__)

DEFAULT_MAX_STEPS = 100_000


class NumericOverflow(ArithmeticError):
    """A step produced a non-finite value.  Distinct from blow-up."""


def _rational_root(q: Fraction, k: int) -> Optional[Fraction]:
    """Exact k-th root of a positive rational, or None when irrational."""

    def iroot(n: int) -> Optional[int]:
        if n < 0:
            return None
        lo, hi = 0, 1
        while hi**k <= n:
            hi <<= 1
        while lo < hi - 1:
            mid = (lo + hi) // 2
            if mid**k <= n:
                lo = mid
            else:
                hi = mid
        return lo if lo**k == n else None

    a, b = iroot(q.numerator), iroot(q.denominator)
    if a is None or b is None:
        return None
    return Fraction(a, b)


@dataclass(frozen=True)
class SchemeParams:
    """Scheme configuration.

    ``lam`` is the lattice ratio delta^2/xi^2 used only by the naive scheme;
    it defaults to 1/d, the value fixed by xi = sqrt(d) delta.  ``delta`` may
    be a Fraction for exact runs.
    """

    d: int
    p: float
    delta: Union[float, Fraction] = 1.0
    lam: Optional[Union[float, Fraction]] = None
    scaled: bool = False

    def __post_init__(self):
        if not isinstance(self.d, (int, np.integer)) or self.d < 1:
            raise ValueError("d must be an integer >= 1")
        if not self.p > 1:
            raise ValueError("p must exceed 1")
        if not self.delta > 0:
            raise ValueError("delta must be positive")
        if self.lam is not None and not self.lam > 0:
            raise ValueError("lambda must be positive")

    @property
    def lattice_ratio(self):
        return 1.0 / self.d if self.lam is None else self.lam

    @property
    def threshold(self) -> float:
        """Blow-up threshold for v: 1 in scaled variables."""
        if self.scaled:
            return 1.0
        return (2.0 / float(self.delta) ** 2) ** (1.0 / (float(self.p) - 1.0))

    @property
    def exact_threshold(self) -> Optional[Fraction]:
        """The threshold as a Fraction when it is rational and p is an integer."""
        if self.scaled:
            return Fraction(1)
        if not _is_integer(self.p):
            return None
        q = 2 / Fraction(self.delta) ** 2
        return _rational_root(q, int(self.p) - 1)

    def as_scaled(self) -> "SchemeParams":
        return replace(self, scaled=True)


@dataclass(frozen=True)
class SimState:
    """Two consecutive slices ``u_prev = u^(tau-1)`` and ``u_curr = u^tau``."""

    tau: int
    u_prev: Field
    u_curr: Field

    def __post_init__(self):
        if self.u_prev.dim != self.u_curr.dim:
            raise ValueError("slices must share a dimension")


@dataclass(frozen=True)
class BlowUpReport:
    """First step tau0 at which v reaches the threshold, with its witness.

    ``v_value`` is reported in the variables of the caller's parameters.
    """

    tau0: Optional[int]
    point: Point
    v_value: object
    threshold: float

    @property
    def blowup_time(self) -> Optional[int]:
        return None if self.tau0 is None else self.tau0 + 1


@dataclass(frozen=True)
class HypothesisReport:
    K: int
    a1_ok: bool
    a2_ok: bool
    p_ok: bool

    @property
    def overall(self) -> bool:
        return self.a1_ok and self.a2_ok and self.p_ok

    def warnings(self) -> list[str]:
        out = []
        if not self.a1_ok:
            out.append(f"initial data not supported in the l1 ball of radius K={self.K}")
        if not self.a2_ok:
            out.append("sum of u1 does not exceed sum of u0")
        if not self.p_ok:
            out.append("p outside 1 < p <= (d+1)/(d-1)")
        return out


def _check_mode(u_prev: Field, u_curr: Field, params: SchemeParams) -> bool:
    if u_prev.dim != params.d or u_curr.dim != params.d:
        raise ValueError(f"fields must have dimension d={params.d}")
    if u_prev.exact != u_curr.exact:
        raise ValueError("cannot mix exact and float fields")
    exact = u_curr.exact
    if exact and not _is_integer(params.p):
        raise ValueError("exact arithmetic needs an integer exponent p")
    return exact


def detect_blowup(v: Field, threshold) -> Optional[tuple[Point, object]]:
    """Lexicographically first point where ``v >= threshold``, with its value."""
    if not threshold > 0:
        raise ValueError("threshold must be positive")
    r = v.radius
    flat = v.data.reshape(-1)
    hit = np.flatnonzero((flat >= threshold) & (_l1_grid(v.dim, r).reshape(-1) <= r))
    if hit.size == 0:
        return None
    idx = np.unravel_index(hit[0], v.data.shape)
    return tuple(int(c) - r for c in idx), flat[hit[0]]


def _check_finite(field: Field) -> Field:
    if not field.exact and not np.all(np.isfinite(field.data)):
        raise NumericOverflow("non-finite value produced")
    return field


def step_proposed(
    u_prev: Field, u_curr: Field, params: SchemeParams, tau: Optional[int] = None
) -> Union[Field, BlowUpReport]:
    """One step of the proposed scheme, or a blow-up report.

    The threshold test runs on the whole of ``v`` before any nonlinearity is
    evaluated.  ``tau`` is the index of ``u_curr`` and only labels the report.
    """
    exact = _check_mode(u_prev, u_curr, params)
    if exact:
        thr = params.exact_threshold
        if thr is None:
            raise ValueError("exact arithmetic needs a rational blow-up threshold")
    else:
        thr = params.threshold
    v = neighbor_average(u_curr)
    hit = detect_blowup(v, thr)
    if hit is not None:
        return BlowUpReport(tau0=tau, point=hit[0], v_value=hit[1], threshold=params.threshold)
    r = max(u_prev.radius, v.radius)
    vals = v.expand(r).data
    prev = u_prev.expand(r).data
    s = signed_pow(vals, params.p - 1)
    if params.scaled:
        nxt = 2 * vals / (1 - s) - prev
    else:
        dd = Fraction(params.delta) ** 2 if exact else float(params.delta) ** 2
        nxt = 4 * vals / (2 - dd * s) - prev
    return _check_finite(Field(params.d, r, nxt))


def step_naive(u_prev: Field, u_curr: Field, params: SchemeParams) -> Field:
    """Central-difference step with the plain ``delta^2 |u|^p`` source term."""
    exact = _check_mode(u_prev, u_curr, params)
    d = params.d
    if exact:
        lam = Fraction(1, d) if params.lam is None else Fraction(params.lam)
        dd = Fraction(params.delta) ** 2
    else:
        lam = float(params.lattice_ratio)
        dd = float(params.delta) ** 2
    v = neighbor_average(u_curr)
    r = max(v.radius, u_prev.radius)
    m = v.expand(r).data
    u = u_curr.expand(r).data
    up = u_prev.expand(r).data
    powed = np.abs(signed_pow(u, params.p))
    nxt = 2 * d * lam * m + (2 - 2 * d * lam) * u - up + dd * powed
    return _check_finite(Field(d, r, nxt))


def to_scaled(field: Field, params: SchemeParams) -> Field:
    """Divide by the physical threshold so the blow-up level becomes 1."""
    if params.scaled:
        raise ValueError("parameters are already in scaled variables")
    if field.exact:
        thr = params.exact_threshold
        if thr is None:
            raise ValueError("threshold is irrational; exact scaling impossible")
        return field.scale(1 / thr)
    return Field(field.dim, field.radius, field.data / params.threshold)


def from_scaled(field: Field, params: SchemeParams) -> Field:
    if params.scaled:
        raise ValueError("parameters are already in scaled variables")
    if field.exact:
        thr = params.exact_threshold
        if thr is None:
            raise ValueError("threshold is irrational; exact scaling impossible")
        return field.scale(thr)
    return Field(field.dim, field.radius, field.data * params.threshold)


def validate_hypotheses(u0: Field, u1: Field, K: int, params: SchemeParams) -> HypothesisReport:
    """Check support, mass and exponent assumptions of the blow-up theorem."""
    if K <= 0:
        raise ValueError("K must be positive")
    a1 = support_radius(u0) <= K and support_radius(u1) <= K
    a2 = field_sum(u1) > field_sum(u0)
    p_ok = params.p > 1 and params.p <= kato_exponent(params.d)
    return HypothesisReport(K=K, a1_ok=bool(a1), a2_ok=bool(a2), p_ok=bool(p_ok))


# -- driver ------------------------------------------------------------------


@dataclass
class RunOutcome:
    """Terminal status plus per-step diagnostics.

    ``status`` is ``"blowup"``, ``"budget"`` or ``"overflow"``.  ``records``
    holds one :class:`~lattice_blowup.diagnostics.DiagnosticsRecord` per step
    tau = 0, 1, ..., final_tau in scaled variables.
    """

    status: str
    final_tau: int
    K: int
    params: SchemeParams
    report: Optional[BlowUpReport] = None
    records: list = dc_field(default_factory=list)
    snapshots: list = dc_field(default_factory=list)
    engine: str = "field"

    @property
    def tau0(self) -> Optional[int]:
        return self.report.tau0 if self.report is not None else None

    def status_record(self) -> dict:
        rec = {"status": self.status, "tau": self.final_tau}
        if self.report is not None:
            rec["tau0"] = self.report.tau0
            rec["blowup_time"] = self.report.blowup_time
            rec["point"] = list(self.report.point)
            rec["v"] = float(self.report.v_value)
        return rec


def _h_sum(v: np.ndarray, p) -> tuple[object, int]:
    from .oracles import h

    if v.dtype == object:
        terms = [h(x, p) for x in v.reshape(-1)]
        return sum(terms, Fraction(0)), sum(1 for t in terms if t < 0)
    terms = h(v, p)
    return math.fsum(terms.reshape(-1)), int(np.count_nonzero(terms < 0))


def _engine_for(u: Field, engine: str) -> str:
    if engine not in ("auto", "field", "kernel"):
        raise ValueError(f"unknown engine {engine!r}")
    if engine == "field":
        return "field"
    usable = not u.exact and u.dim <= 3
    if engine == "kernel" and not usable:
        raise ValueError("compiled kernel needs float64 fields with d <= 3")
    return "kernel" if usable else "field"


def run_simulation(
    u0: Field,
    u1: Field,
    params: SchemeParams,
    max_steps: int = DEFAULT_MAX_STEPS,
    record_every: int = 1,
    K: Optional[int] = None,
    snapshot_every: Optional[int] = None,
    engine: str = "auto",
    on_record: Optional[Callable] = None,
) -> RunOutcome:
    """Iterate the proposed scheme from ``(u0, u1)`` until blow-up or budget.

    Physical data are mapped to scaled variables first and every diagnostic
    is computed there.  v^tau is tested for tau = 0, 1, ..., max_steps; the
    run stops at the first tau with some v >= threshold.  Hypothesis
    violations are not checked here.

    ``record_every`` thins ``outcome.records``; constants and monitors should
    be fitted on a run with ``record_every=1``.
    """
    from .diagnostics import DiagnosticsRecord, complete_records

    if max_steps < 1:
        raise ValueError("max_steps must be at least 1")
    if record_every < 1:
        raise ValueError("record_every must be at least 1")
    _check_mode(u0, u1, params)
    if u0.exact and params.exact_threshold is None:
        raise ValueError("exact arithmetic needs a rational blow-up threshold")
    r0 = max(u0.radius, u1.radius)
    if K is None:
        K = max(support_radius(u0), support_radius(u1))
    if params.scaled:
        s0, s1 = u0.expand(r0), u1.expand(r0)
    else:
        s0, s1 = to_scaled(u0.expand(r0), params), to_scaled(u1.expand(r0), params)
    sp = params.as_scaled()
    chosen = _engine_for(s1, engine)

    records: list = []
    snapshots: list = []
    p = params.p
    d = params.d

    def snap(tau: int, f: Field):
        if snapshot_every and tau % snapshot_every == 0:
            snapshots.append((tau, f if params.scaled else from_scaled(f, params)))

    snap.every = snapshot_every

    def add(tau, U, v_max, v_min, radius, hsum):
        rec = DiagnosticsRecord(
            tau=tau, U=U, T=l1_ball_count(d, K + tau), maxv=v_max, minv=v_min, radius=radius, hsum=hsum
        )
        records.append(rec)
        if on_record is not None:
            on_record(rec)

    def report_for(tau, point, v_scaled):
        v_out = v_scaled if params.scaled else (
            v_scaled * params.exact_threshold if isinstance(v_scaled, Fraction) else v_scaled * params.threshold
        )
        return BlowUpReport(tau0=tau, point=point, v_value=v_out, threshold=params.threshold)

    # tau = 0 is tested too: the definition allows blow-up already at v^0
    v0 = neighbor_average(s0)
    hit0 = detect_blowup(v0, 1 if not s0.exact else Fraction(1))
    add(0, field_sum(s0), field_max(v0)[0], field_min(v0)[0], support_radius(s0), None)
    snap(0, s0)
    if hit0 is not None:
        out = RunOutcome("blowup", 0, K, params, report_for(0, *hit0), records, snapshots, chosen)
        complete_records(records)
        return out

    if chosen == "kernel":
        from ._kernels import KernelRunner

        runner = KernelRunner(s0, s1, p)
        status, tau, hit = runner.run(max_steps, add, snap)
        report = report_for(tau, *hit) if hit is not None else None
    else:
        status, tau, report = _run_field(s0, s1, sp, max_steps, add, snap, report_for)

    complete_records(records)
    if record_every > 1:
        records = [r for r in records if r.tau % record_every == 0 or r.tau == tau]
    return RunOutcome(status, tau, K, params, report, records, snapshots, chosen)


def _run_field(s0, s1, sp, max_steps, add, snap, report_for):
    prev, cur = s0, s1
    tau = 1
    one = Fraction(1) if cur.exact else 1.0
    snap(1, cur)
    U = field_sum(cur)
    while True:
        v = neighbor_average(cur)
        vmax = field_max(v)[0]
        vmin = field_min(v)[0]
        hit = detect_blowup(v, one)
        if hit is not None:
            add(tau, U, vmax, vmin, support_radius(cur), None)
            return "blowup", tau, report_for(tau, *hit)
        hsum, _ = _h_sum(v.data, sp.p)
        add(tau, U, vmax, vmin, support_radius(cur), hsum)
        if tau >= max_steps:
            return "budget", tau, None
        try:
            nxt = step_proposed(prev, cur, sp, tau=tau)
        except NumericOverflow:
            return "overflow", tau, None
        prev, cur = cur, nxt.trim()
        tau += 1
        U = field_sum(cur)
        snap(tau, cur)
