"""Acceptance criteria 1-10; each test prints one PASS/FAIL line."""

import io
import itertools
import math
import time
from fractions import Fraction

import numpy as np
import pytest

from lattice_blowup import (
    ContinuousBoundParams,
    Field,
    SchemeParams,
    continuous_blowup_upper_time,
    continuous_lower_bound,
    iterate_naive_uniform,
    iterate_uniform,
    kato_exponent,
    l1_ball_count,
    linear_lower_bound_check,
    make_field,
    run_simulation,
)
from lattice_blowup.cli import build_initial_data, build_params, run_experiment, simulate_with_monitors
from lattice_blowup.config import config_from_dict
from lattice_blowup.consistency import catalog, refinement_study
from lattice_blowup.diagnostics import IDENTITY_RTOL, identity_residuals, write_records_csv
from lattice_blowup.oracles import JENSEN_TOL, convexity_scan, phi, phi_suite, random_lemma_suite
from lattice_blowup.uniform import ExactSizeExceeded, rk4_ode1, rk4_state

GRID = [(p, dl, g) for p in (1.5, 2.0, 3.0) for dl in (1.0, 0.5, 0.1, 0.05) for g in (0.01, 0.1, 1.0)]
THEOREM_RUNS = {1: 3.0, 2: kato_exponent(2), 3: kato_exponent(3)}
NAIVE_MAX_BITS = 1 << 18


def theorem_config(d):
    return config_from_dict({"mode": "run", "d": d, "p": THEOREM_RUNS[d], "delta": 0.5, "K": 1,
                             "max_steps": 10_000, "initial_data": {"kind": "point", "u0_value": 0, "u1_value": 1}})


@pytest.fixture(scope="module")
def theorem_runs():
    out = {}
    for d in (1, 2, 3):
        cfg = theorem_config(d)
        params = build_params(cfg)
        u0, u1 = build_initial_data(cfg)
        t0 = time.perf_counter()
        outcome, consts, report = simulate_with_monitors(cfg, params, u0, u1, cfg.K, snapshots=False)
        elapsed = time.perf_counter() - t0
        buf = io.StringIO()
        write_records_csv(outcome.records, buf)
        out[d] = dict(cfg=cfg, outcome=outcome, report=report, elapsed=elapsed, csv=buf.getvalue().encode())
    return out


def test_criterion_1_uniform_blowup(criterion):
    with criterion(1) as c:
        t0 = time.perf_counter()
        steps = [iterate_uniform(g, p, dl, max_steps=10**6).blowup_step for p, dl, g in GRID]
        elapsed = time.perf_counter() - t0
        pin = iterate_uniform(1, 2, 1, exact=True).blowup_step
        finite = all(s is not None and s <= 10**6 for s in steps)
        c.ok = finite and elapsed <= 10 and pin == 2 and len(steps) == 36
        c.detail = f"36 cells finite={finite}, max tau0={max(s or 0 for s in steps)}, {elapsed:.2f}s, pin tau0={pin}"
        assert c.ok, c.detail


def test_criterion_2_linear_lower_bound(criterion):
    with criterion(2) as c:
        bad = [(p, dl, g) for p, dl, g in GRID if not linear_lower_bound_check(iterate_uniform(g, p, dl, 10**6))]
        c.ok = not bad
        c.detail = f"u^tau > g*tau strict in {36 - len(bad)}/36 cells" + (f", failing {bad}" if bad else "")
        assert c.ok, c.detail


def test_criterion_3_scheme_contrast(criterion):
    with criterion(3) as c:
        g, delta = Fraction(1, 2), Fraction(1, 2)
        traj = iterate_uniform(g, 2, delta, max_steps=10**6, exact=True)
        tau0 = traj.blowup_step
        need = tau0 + 50
        try:
            vals = iterate_naive_uniform(g, 2, delta, need, exact=True, max_bits=NAIVE_MAX_BITS)
            reached, bits = len(vals) - 1, max(max(v.numerator.bit_length(), v.denominator.bit_length()) for v in vals)
        except ExactSizeExceeded as e:
            reached, bits = e.step - 1, e.bits
        projected = bits * 2.0 ** (need - reached - 1)
        c.ok = tau0 is not None and reached >= need
        c.detail = (
            f"proposed tau0={tau0}; naive exact reached {reached}/{need} steps before a {NAIVE_MAX_BITS}-bit "
            f"rational (step {reached + 1} needs {bits} bits; step {need} would need ~{projected:.1e} bits)"
        )
        assert c.ok, c.detail


def test_criterion_4_theorem_regime(criterion, theorem_runs):
    with criterion(4) as c:
        parts, ok = [], True
        for d, run in theorem_runs.items():
            o, K = run["outcome"], run["cfg"].K
            recs = o.records
            pre = [r for r in recs if r.tau < o.tau0] if o.tau0 is not None else []
            blow = o.status == "blowup" and o.tau0 <= 10_000
            cone = all(r.radius <= K + r.tau - 1 for r in recs if r.tau >= 1)
            below = all(r.U < r.T for r in pre)
            convex = all(r.d2U is not None and r.d2U >= 0 for r in pre if r.tau >= 1)
            monitors = run["report"].hard_ok
            fast = d != 3 or run["elapsed"] <= 60
            ok &= blow and cone and below and convex and monitors and fast
            parts.append(f"d={d} p={o.params.p:g} tau0={o.tau0} at {o.report.point if o.report else None} "
                         f"cone={cone} U<T={below} d2U>=0={convex} {run['elapsed']:.1f}s")
        c.ok = ok
        c.detail = "; ".join(parts)
        assert c.ok, c.detail


def test_criterion_5_sum_identity(criterion, theorem_runs):
    with criterion(5) as c:
        worst, steps, ok = 0.0, 0, True
        for run in theorem_runs.values():
            o = run["outcome"]
            res = identity_residuals(o.records)
            ok &= len(res) == o.tau0 - 1
            for _, r, scale in res:
                worst = max(worst, r / scale)
                steps += 1
        exact = run_simulation(Field.zeros(1, exact=True), make_field(1, [((0,), Fraction(1))], exact=True),
                               SchemeParams(1, 2, Fraction(1, 2)), 1000)
        ex = identity_residuals(exact.records)
        exact_zero = exact.status == "blowup" and len(ex) == exact.tau0 - 1 and all(r == 0 for _, r, _ in ex)
        c.ok = ok and worst <= IDENTITY_RTOL and exact_zero
        c.detail = (f"max relative residual {worst:.2e} over {steps} float steps; "
                    f"rational d=1 p=2: {len(ex)} steps to tau0={exact.tau0}, all residuals 0={exact_zero}")
        assert c.ok, c.detail


def test_criterion_6_lemma_suite(criterion):
    with criterion(6) as c:
        t0 = time.perf_counter()
        lemma = random_lemma_suite(cases=100_000, seed=0)
        conv = {p: convexity_scan(p, 1e-3, hi=0.999) for p in (1.1, 1.5, 2.0, 3.0)}
        ph = phi_suite((1.1, 2.0, 3.0), grid_step=1e-4)
        exact_one = all(phi(Fraction(1), p) == 0 for p in (2, 3))
        elapsed = time.perf_counter() - t0
        c.ok = (
            lemma.cases == 100_000
            and lemma.min_gap >= -JENSEN_TOL
            and min(conv.values()) >= -JENSEN_TOL
            and ph["min_gap"] > 0
            and all(v == 0 for v in ph["at_one"].values())
            and exact_one
            and elapsed <= 30
        )
        c.detail = (f"jensen min gap {lemma.min_gap:.3e} over {lemma.cases} ({lemma.lambda0_zero} lambda0=0 skipped); "
                    f"convexity min {min(conv.values()):.3e}; phi min below 1 {ph['min_gap']:.3e}, "
                    f"phi(1)=0; {elapsed:.1f}s")
        assert c.ok, c.detail


def _enumerate_ball(d, R):
    axis = np.arange(-R, R + 1)
    grids = np.meshgrid(*([axis] * d), indexing="ij")
    return int(np.count_nonzero(sum(np.abs(g) for g in grids) <= R))


def test_criterion_7_ball_count(criterion):
    with criterion(7) as c:
        bad = [(d, R) for d in range(1, 5) for R in range(13) if l1_ball_count(d, R) != _enumerate_ball(d, R)]
        c.ok = not bad
        c.detail = f"{4 * 13 - len(bad)}/52 (d, R) pairs equal" + (f", mismatches {bad}" if bad else "")
        assert c.ok, c.detail


def test_criterion_8_consistency_order(criterion):
    with criterion(8) as c:
        t0 = time.perf_counter()
        studies = [refinement_study(s, (0.04, 0.02, 0.01), p=p) for s in catalog((1, 2)) for p in (1.5, 2.0, 3.0)]
        elapsed = time.perf_counter() - t0
        slopes = [st.slope for st in studies]
        c.ok = all(st.status == "ok" and 1.8 <= st.slope <= 2.2 for st in studies) and elapsed <= 10
        c.detail = f"{len(studies)} studies, slopes in [{min(slopes):.4f}, {max(slopes):.4f}], {elapsed:.2f}s"
        assert c.ok, c.detail


def test_criterion_9_continuous_bound(criterion):
    with criterion(9) as c:
        ex = ContinuousBoundParams.for_exponent(3.0, 1.0, 1.0)
        t_star = continuous_blowup_upper_time(ex)
        anchor_err = max(abs(continuous_lower_bound(t, ex) - 1.0) for t in (1.0, math.nextafter(1.0, 2.0)))
        worst_margin = math.inf
        for p in (2.0, 3.0):
            eps, g = 0.5, 1.0
            u_eps, du_eps = rk4_state(p, 0.0, 0.0, g, eps)
            prm = ContinuousBoundParams.for_exponent(p, eps, u_eps)
            ts_ = continuous_blowup_upper_time(prm)
            samples = [eps + (ts_ - eps) * k / 21 for k in range(1, 21)]
            num = rk4_ode1(p, eps, u_eps, du_eps, samples)
            for t, y in zip(samples, num):
                worst_margin = min(worst_margin, y - continuous_lower_bound(t, prm))
            anchor_err = max(anchor_err, abs(continuous_lower_bound(eps, prm) - u_eps) / u_eps)
        c.ok = anchor_err <= 1e-12 and worst_margin >= 0 and abs(t_star - (1 + math.sqrt(2))) <= 1e-12
        c.detail = (f"anchor error {anchor_err:.1e}; RK4 minus bound >= {worst_margin:.3e} at 40 samples; "
                    f"T*={t_star:.15f}")
        assert c.ok, c.detail


def test_criterion_10_determinism(criterion, theorem_runs, tmp_path):
    with criterion(10) as c:
        same = {}
        for d, run in theorem_runs.items():
            out = tmp_path / f"d{d}"
            run_experiment(run["cfg"], str(out))
            same[d] = (out / "trajectory.csv").read_bytes() == run["csv"]
        c.ok = all(same.values())
        c.detail = "trajectory.csv byte-identical on rerun: " + ", ".join(f"d={d} {v}" for d, v in same.items())
        assert c.ok, c.detail
