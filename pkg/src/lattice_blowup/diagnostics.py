"""Per-step trajectory quantities and empirical monitors for the growth argument.

All quantities refer to scaled variables (threshold 1).  ``U`` is the total
mass of ``u^tau``, ``T`` the number of lattice points within l1 distance
``K + tau`` of the origin, ``d2U`` the second difference of U in time and
``E`` the energy-type functional

    E^tau = (U^(tau+1) - U^tau)^2 - C2/(p+1) * tau^-(p+1) * (U^tau)^(p+1).

Only two inequalities are asserted at every pre-blow-up step: ``U < T`` and
``d2U >= 0``.  Everything that only holds for large tau is reported with
an empirical onset and fitted constant.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field as dc_field, replace
from fractions import Fraction
from typing import IO, Optional, Sequence

from ._numeric import signed_pow
from .field import Field, field_max, field_min, field_sum, l1_ball_count, neighbor_average, support_radius

CSV_COLUMNS = ("tau", "U", "T", "maxv", "minv", "radius", "d2U", "E")
IDENTITY_RTOL = 1e-10


@dataclass(frozen=True)
class DiagnosticsRecord:
    """Quantities at step tau.  ``hsum`` is the sum of h(v^tau), None once v reached 1."""

    tau: int
    U: object
    T: int
    maxv: object
    minv: object
    radius: int
    d2U: object = None
    E: Optional[float] = None
    hsum: object = None

    @property
    def below_threshold(self) -> bool:
        return self.maxv < 1


@dataclass(frozen=True)
class DiagnosticsConstants:
    """Constants of the growth argument, fitted on the tail of a run.

    ``C2 = 2 * C_T^(1-p)``.  ``C1p`` is the constant of the ``tau log tau``
    bound, ``Cprime`` that of the ``tau^(d+1)`` bound and ``C3`` that of the
    squared increment bound.
    """

    d: int
    p: float
    C_T: float
    C2: float
    C0: float
    onset_tau: int
    C1p: float = math.nan
    C3: float = math.nan
    Cprime: float = math.nan

    def __post_init__(self):
        if not self.C_T > 0 or not self.C2 > 0:
            raise ValueError("C_T and C2 must be positive")

    @classmethod
    def from_C_T(cls, d: int, p: float, C_T: float, **kw) -> "DiagnosticsConstants":
        kw.setdefault("C0", math.nan)
        kw.setdefault("onset_tau", 1)
        return cls(d=d, p=p, C_T=C_T, C2=2.0 * C_T ** (1.0 - p), **kw)


def energy(tau: int, U, U_next, consts: DiagnosticsConstants) -> Optional[float]:
    """E^tau, or None for tau < 1 where ``tau^-(p+1)`` is undefined."""
    if tau < 1 or U is None or U_next is None:
        return None
    p = consts.p
    inc = float(U_next) - float(U)
    return inc * inc - consts.C2 / (p + 1) * tau ** (-(p + 1)) * signed_pow(float(U), p + 1)


def record_step(
    state,
    K: int,
    consts: Optional[DiagnosticsConstants] = None,
    u_next: Optional[Field] = None,
) -> DiagnosticsRecord:
    """Diagnostics of ``state.u_curr``.

    ``d2U`` and ``E`` need ``u_next``; ``E`` also needs ``consts``.
    ``hsum`` is left empty here; the driver fills it.
    """
    u, up = state.u_curr, state.u_prev
    v = neighbor_average(u)
    U = field_sum(u)
    d2U = E = None
    if u_next is not None:
        U_next = field_sum(u_next)
        d2U = U_next - 2 * U + field_sum(up)
        if consts is not None:
            E = energy(state.tau, U, U_next, consts)
    return DiagnosticsRecord(
        tau=state.tau,
        U=U,
        T=l1_ball_count(u.dim, K + state.tau),
        maxv=field_max(v)[0],
        minv=field_min(v)[0],
        radius=support_radius(u),
        d2U=d2U,
        E=E,
    )


def complete_records(records: list, consts: Optional[DiagnosticsConstants] = None) -> list:
    """Fill d2U (and E when ``consts`` is given) in place from neighbouring records.

    Records must be consecutive in tau.  Returns the same list.
    """
    for i in range(1, len(records) - 1):
        a, b, c = records[i - 1], records[i], records[i + 1]
        if a.tau + 1 != b.tau or b.tau + 1 != c.tau:
            raise ValueError("records must be consecutive to complete them")
        upd = {"d2U": c.U - 2 * b.U + a.U}
        if consts is not None:
            upd["E"] = energy(b.tau, b.U, c.U, consts)
        records[i] = replace(b, **upd)
    if consts is not None and len(records) >= 2:
        a, b = records[0], records[1]
        records[0] = replace(a, E=energy(a.tau, a.U, b.U, consts))
    return records


def check_sum_identity(u_prev: Field, u_curr: Field, u_next: Field, params) -> object:
    """``|U_next - 2U + U_prev - sum h(v)|`` for one step, in scaled variables.

    Physical slices are scaled first.  Exact fields give an exact residual.
    """
    from .oracles import h
    from .scheme import to_scaled

    if not params.scaled:
        u_prev, u_curr, u_next = (to_scaled(f, params) for f in (u_prev, u_curr, u_next))
    v = neighbor_average(u_curr)
    flat = v.data.reshape(-1)
    if v.exact:
        hs = sum((h(x, params.p) for x in flat), Fraction(0))
        lhs = field_sum(u_next) - 2 * field_sum(u_curr) + field_sum(u_prev)
        return abs(lhs - hs)
    hs = math.fsum(h(flat, params.p))
    lhs = math.fsum([field_sum(u_next), -2 * field_sum(u_curr), field_sum(u_prev)])
    return abs(lhs - hs)


def identity_residuals(records: Sequence[DiagnosticsRecord]) -> list[tuple[int, float, float]]:
    """``(tau, |d2U - hsum|, scale)`` for every record carrying both.

    ``scale`` is ``max(1, |U^(tau+1)|)``, the normaliser of the relative bound.
    """
    out = []
    for i, r in enumerate(records):
        if r.d2U is None or r.hsum is None or i + 1 >= len(records):
            continue
        res = abs(r.d2U - r.hsum)
        out.append((r.tau, res, max(1.0, abs(float(records[i + 1].U)))))
    return out


# -- fitted constants ----------------------------------------------------------


def _pre_blowup(records: Sequence[DiagnosticsRecord]) -> list[DiagnosticsRecord]:
    return [r for r in records if r.tau >= 1 and r.below_threshold]


def fit_constants(records: Sequence[DiagnosticsRecord], d: int, p: float, tail_fraction: float = 0.5) -> DiagnosticsConstants:
    """Fit the existential constants on the last ``tail_fraction`` of the pre-blow-up window.

    ``C_T = max T/tau^d``, ``C0 = min U/tau``, ``C1p = min U/(tau log tau)``,
    ``Cprime = min U/tau^(d+1)`` and ``C3 = min (U^(tau+1)-U^tau)^2 tau^(p+1) / U^(p+1)``,
    all over the tail.  ``onset_tau`` is the first tau of the tail.
    """
    if len(records) < 10:
        raise ValueError("fit_constants needs at least 10 records")
    if not 0 < tail_fraction <= 1:
        raise ValueError("tail_fraction must lie in (0, 1]")
    pre = _pre_blowup(records)
    if len(pre) < 2:
        raise ValueError("too few pre-blow-up records to fit constants")
    start = min(int(len(pre) * (1.0 - tail_fraction)), len(pre) - 1)
    tail = pre[start:]
    by_tau = {r.tau: r for r in records}

    C_T = max(r.T / r.tau**d for r in tail)
    C0 = min(float(r.U) / r.tau for r in tail)
    logs = [float(r.U) / (r.tau * math.log(r.tau)) for r in tail if r.tau >= 2]
    C1p = min(logs) if logs else math.nan
    Cprime = min(float(r.U) / r.tau ** (d + 1) for r in tail)
    sq = []
    for r in tail:
        nxt = by_tau.get(r.tau + 1)
        if nxt is not None and float(r.U) > 0:
            inc = float(nxt.U) - float(r.U)
            sq.append(inc * inc * r.tau ** (p + 1) / float(r.U) ** (p + 1))
    C3 = min(sq) if sq else math.nan
    return DiagnosticsConstants(
        d=d, p=p, C_T=C_T, C2=2.0 * C_T ** (1.0 - p), C0=C0, onset_tau=tail[0].tau,
        C1p=C1p, C3=C3, Cprime=Cprime,
    )


# -- monitors ------------------------------------------------------------------


@dataclass
class InequalityStatus:
    onset_tau: Optional[int]
    holds_through_end: bool
    fitted_constant: Optional[float]
    hard: bool = False
    violations: list = dc_field(default_factory=list)


@dataclass
class MonitorReport:
    inequalities: dict
    e_implication_violations: list
    lemma_hypothesis_failures: list
    h_sign_violations: list
    window_end: Optional[int]

    @property
    def hard_ok(self) -> bool:
        return all(s.holds_through_end for s in self.inequalities.values() if s.hard)

    def to_dict(self) -> dict:
        return {
            "inequalities": {k: asdict(v) for k, v in self.inequalities.items()},
            "e_implication_violations": self.e_implication_violations,
            "lemma_hypothesis_failures": self.lemma_hypothesis_failures,
            "h_sign_violations": self.h_sign_violations,
            "window_end": self.window_end,
        }

    def to_json(self, fp: IO[str]) -> None:
        json.dump(self.to_dict(), fp, indent=2, sort_keys=True, default=_json_default)
        fp.write("\n")


def _json_default(x):
    if isinstance(x, Fraction):
        return float(x)
    raise TypeError(f"not serialisable: {type(x).__name__}")


def _onset(taus: list[int], holds: list[bool]) -> Optional[int]:
    """First tau from which ``holds`` stays true to the end of the window."""
    onset = None
    for t, ok in zip(reversed(taus), reversed(holds)):
        if not ok:
            break
        onset = t
    return onset


def _growth(taus, holds, c) -> InequalityStatus:
    if c is None or not math.isfinite(c) or c <= 0:
        return InequalityStatus(None, False, c)
    onset = _onset(taus, holds)
    return InequalityStatus(onset, onset is not None, c)


def _hard(taus, holds) -> InequalityStatus:
    bad = [t for t, ok in zip(taus, holds) if not ok]
    return InequalityStatus(_onset(taus, holds), not bad, None, hard=True, violations=bad)


_GROWTH_KEYS = ("d2U_growth", "U_linear", "U_tau_log_tau", "U_power_d_plus_1", "increment_squared", "E_increasing")


def monitor_inequalities(records: Sequence[DiagnosticsRecord], consts: Optional[DiagnosticsConstants]) -> MonitorReport:
    """Track every inequality of the growth argument along a trajectory.

    The window is tau >= 1 with max v < 1.  Steps whose d2U is unknown (the
    last record) are left out of the inequalities that need it.  Without
    ``consts`` (runs too short to fit them) only the hard inequalities and
    the sign flags are evaluated; growth monitors report no onset.
    """
    pre = _pre_blowup(records)
    taus = [r.tau for r in pre]
    U = [float(r.U) for r in pre]
    with_d2 = [(r.tau, float(r.U), float(r.d2U)) for r in pre if r.d2U is not None]
    t2 = [t for t, _, _ in with_d2]

    ineq = {}
    ineq["U_below_T"] = _hard(taus, [float(r.U) < r.T for r in pre])
    ineq["d2U_nonnegative"] = _hard(t2, [x >= 0 for _, _, x in with_d2])
    lemma = [r.tau for r in pre if r.minv < 0]
    hneg = [r.tau for r in pre if r.hsum is not None and r.hsum < 0]
    window_end = taus[-1] if taus else None
    if consts is None:
        for key in _GROWTH_KEYS:
            ineq[key] = InequalityStatus(None, False, None)
        return MonitorReport(ineq, [], lemma, hneg, window_end)

    p, d = consts.p, consts.d
    ineq["d2U_growth"] = _growth(
        t2, [x >= consts.C2 * t ** (-(p + 1)) * signed_pow(u, p) for t, u, x in with_d2], consts.C2
    )
    ineq["U_linear"] = _growth(taus, [u >= consts.C0 * t for t, u in zip(taus, U)], consts.C0)
    ineq["U_tau_log_tau"] = _growth(
        taus, [u >= consts.C1p * t * math.log(t) for t, u in zip(taus, U)], consts.C1p
    )
    ineq["U_power_d_plus_1"] = _growth(
        taus, [u >= consts.Cprime * t ** (d + 1) for t, u in zip(taus, U)], consts.Cprime
    )

    by_tau = {r.tau: r for r in records}
    sq_t, sq_ok = [], []
    for t, u in zip(taus, U):
        nxt = by_tau.get(t + 1)
        if nxt is None:
            continue
        inc = float(nxt.U) - u
        sq_t.append(t)
        sq_ok.append(inc * inc >= consts.C3 * t ** (-(p + 1)) * signed_pow(u, p + 1))
    ineq["increment_squared"] = _growth(sq_t, sq_ok, consts.C3)

    E = {r.tau: energy(r.tau, r.U, by_tau[r.tau + 1].U, consts) for r in pre if r.tau + 1 in by_tau}
    e_t = [t for t in sorted(E) if t - 1 in E]
    ineq["E_increasing"] = _growth(e_t, [E[t] > E[t - 1] for t in e_t], consts.C2)

    ev = []
    d2_at = {t: x for t, _, x in with_d2}
    for t in e_t:
        if t < 2 or t not in d2_at:
            continue
        u_m, u_0, u_p = float(by_tau[t - 1].U), float(by_tau[t].U), float(by_tau[t + 1].U)
        premise = (
            0 <= u_m <= u_0 <= u_p
            and u_0 > 0
            and d2_at[t] >= consts.C2 * t ** (-(p + 1)) * u_0**p
        )
        if not premise:
            continue
        tol = 1e-12 * max(1.0, abs(E[t]), abs(E[t - 1]))
        if E[t] - E[t - 1] < -tol:
            ev.append(t)

    return MonitorReport(ineq, ev, lemma, hneg, window_end)


# -- output --------------------------------------------------------------------


def _cell(x) -> str:
    if x is None:
        return ""
    if isinstance(x, Fraction):
        return str(x)
    if isinstance(x, (int,)) and not isinstance(x, bool):
        return str(x)
    return repr(float(x))


def write_records_csv(records: Sequence[DiagnosticsRecord], fp: IO[str]) -> None:
    """CSV with columns tau,U,T,maxv,minv,radius,d2U,E; empty cells for unknown values."""
    w = csv.writer(fp, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in records:
        w.writerow([_cell(getattr(r, c)) for c in CSV_COLUMNS])


def write_records_jsonl(records: Sequence[DiagnosticsRecord], fp: IO[str], status: Optional[dict] = None) -> None:
    """One JSON object per record, then the terminal status record if given."""
    for r in records:
        rec = {c: _jsonable(getattr(r, c)) for c in CSV_COLUMNS}
        fp.write(json.dumps(rec, sort_keys=True) + "\n")
    if status is not None:
        fp.write(json.dumps(status, sort_keys=True) + "\n")


def _jsonable(x):
    if isinstance(x, Fraction):
        return str(x)
    if isinstance(x, float) and not math.isfinite(x):
        return repr(x)
    return x
