"""Command line entry point and experiment orchestration."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from fractions import Fraction
from pathlib import Path
from typing import IO, Optional, Sequence

from . import consistency as cons
from . import oracles
from .config import ConfigError, ExperimentConfig, config_from_dict, with_overrides
from .diagnostics import (
    complete_records,
    fit_constants,
    monitor_inequalities,
    write_records_csv,
    write_records_jsonl,
)
from .field import Field, FieldError, field_sum, lattice_points, make_field, read_snapshots, support_radius, write_snapshot
from .scheme import NumericOverflow, SchemeParams, run_simulation, step_naive, validate_hypotheses
from .uniform import critical_exponent, iterate_uniform, kato_exponent, write_uniform_csv

log = logging.getLogger("lattice_blowup")

EXIT_OK, EXIT_CONFIG, EXIT_IO = 0, 2, 3

ONSET_KEYS = ("d2U_growth", "U_linear", "U_tau_log_tau", "U_power_d_plus_1", "increment_squared", "E_increasing")
CONST_KEYS = ("C_T", "C2", "C0", "C1p", "C3", "Cprime")
SUMMARY_COLUMNS = (
    ("config_hash", "label", "mode", "d", "p", "delta", "region", "status", "tau0", "hard_ok")
    + CONST_KEYS
    + tuple(f"onset_{k}" for k in ONSET_KEYS)
)


class ExperimentIOError(OSError):
    pass


# -- setup -----------------------------------------------------------------------


def _value(x, exact: bool):
    if exact:
        return Fraction(x)
    return float(x)


def build_params(cfg: ExperimentConfig, p=None, delta=None) -> SchemeParams:
    p = cfg.p if p is None else p
    delta = cfg.delta if delta is None else delta
    if cfg.exact:
        if not float(p).is_integer():
            raise ConfigError("p: rational arithmetic needs an integer exponent")
        p, delta = int(p), Fraction(delta)
        lam = None if cfg.lam is None else Fraction(cfg.lam)
    else:
        p, delta = float(p), float(delta)
        lam = None if cfg.lam is None else float(cfg.lam)
    return SchemeParams(d=cfg.d, p=p, delta=delta, lam=lam, scaled=cfg.scaled)


def build_initial_data(cfg: ExperimentConfig) -> tuple[Field, Field]:
    """``(u0, u1)`` described by ``cfg.initial_data``."""
    data, d, exact = cfg.initial_data, cfg.d, cfg.exact
    if data.kind == "file":
        try:
            with open(data.path, encoding="utf-8") as fp:
                fields = read_snapshots(fp)
        except OSError as e:
            raise ExperimentIOError(f"initial_data.path: {e}") from e
        except (FieldError, ValueError, KeyError) as e:
            raise ExperimentIOError(f"initial_data.path: malformed snapshot file ({e})") from e
        if len(fields) < 2:
            raise ExperimentIOError("initial_data.path: need two snapshots (u0 then u1)")
        u0, u1 = fields[0], fields[1]
        if u0.dim != d or u1.dim != d:
            raise ConfigError(f"initial_data.path: snapshots have d={u0.dim}, config has d={d}")
        if exact:
            u0, u1 = u0.to_exact(), u1.to_exact()
        return u0, u1
    pts = [tuple([0] * d)] if data.kind == "point" else list(lattice_points(d, data.radius))
    a, b = _value(data.u0_value, exact), _value(data.u1_value, exact)
    u0 = make_field(d, [(n, a) for n in pts], exact=exact)
    u1 = make_field(d, [(n, b) for n in pts], exact=exact)
    return u0, u1


def _K(cfg: ExperimentConfig, u0: Field, u1: Field) -> int:
    if cfg.K is not None:
        return cfg.K
    return max(1, support_radius(u0), support_radius(u1))


def _region(d: int, p) -> str:
    return "theorem" if float(p) <= kato_exponent(d) else "outside theorem"


def _num(x):
    if x is None:
        return ""
    if isinstance(x, Fraction):
        return str(x)
    if isinstance(x, float):
        return repr(x)
    return str(x)


def _base_row(cfg: ExperimentConfig, label: str, p=None, delta=None) -> dict:
    p = cfg.p if p is None else p
    delta = cfg.delta if delta is None else delta
    return {"config_hash": cfg.digest(), "label": label, "mode": cfg.mode, "d": cfg.d,
            "p": p, "delta": delta, "region": _region(cfg.d, p)}


# -- outputs ---------------------------------------------------------------------


def emit_summary(rows: Sequence[dict], fp: IO[str]) -> None:
    """One CSV row per outcome, in input order."""
    if not rows:
        raise ValueError("emit_summary needs at least one outcome")
    w = csv.writer(fp, lineterminator="\n")
    w.writerow(SUMMARY_COLUMNS)
    for row in rows:
        w.writerow([_num(row.get(c)) for c in SUMMARY_COLUMNS])


def _open(out: Path, name: str):
    try:
        return open(out / name, "w", encoding="utf-8", newline="")
    except OSError as e:
        raise ExperimentIOError(f"{out / name}: {e}") from e


def _dump_json(out: Path, name: str, obj) -> None:
    with _open(out, name) as fp:
        json.dump(obj, fp, indent=2, sort_keys=True, default=_json_default)
        fp.write("\n")


def _json_default(x):
    if isinstance(x, Fraction):
        return str(x)
    raise TypeError(type(x).__name__)


def _finite_or_none(x):
    return x if isinstance(x, (int, float)) and math.isfinite(x) else None


# -- modes -----------------------------------------------------------------------


def simulate_with_monitors(cfg: ExperimentConfig, params: SchemeParams, u0: Field, u1: Field, K: int, snapshots: bool):
    """Run the scheme, fit constants on the full record list and attach E and monitors."""
    outcome = run_simulation(
        u0, u1, params, max_steps=cfg.max_steps, record_every=1, K=K,
        snapshot_every=cfg.snapshot_every if snapshots else None, engine=cfg.engine,
    )
    records = outcome.records
    consts = report = None
    try:
        consts = fit_constants(records, cfg.d, float(params.p), float(cfg.tail_fraction))
    except ValueError as e:
        log.info("constants not fitted: %s", e)
    if consts is not None:
        complete_records(records, consts)
    report = monitor_inequalities(records, consts)
    return outcome, consts, report


def _outcome_row(cfg, label, outcome, consts, report, p=None, delta=None) -> dict:
    row = _base_row(cfg, label, p, delta)
    row.update(status=outcome.status, tau0=outcome.tau0)
    if consts is not None:
        for k in CONST_KEYS:
            row[k] = _finite_or_none(getattr(consts, k))
    if report is not None:
        row["hard_ok"] = report.hard_ok
        for k in ONSET_KEYS:
            row[f"onset_{k}"] = report.inequalities[k].onset_tau
    return row


def mode_run(cfg: ExperimentConfig, out: Path) -> list[dict]:
    params = build_params(cfg)
    u0, u1 = build_initial_data(cfg)
    K = _K(cfg, u0, u1)
    hyp = validate_hypotheses(u0, u1, K, params)
    for msg in hyp.warnings():
        log.warning("hypothesis not met: %s", msg)
    outcome, consts, report = simulate_with_monitors(cfg, params, u0, u1, K, snapshots=True)
    records = [r for r in outcome.records if r.tau % cfg.record_every == 0 or r.tau == outcome.final_tau]
    status = outcome.status_record()
    status["engine"] = outcome.engine
    status["K"] = K
    status["hypotheses"] = {"a1_ok": hyp.a1_ok, "a2_ok": hyp.a2_ok, "p_ok": hyp.p_ok, "overall": hyp.overall}
    with _open(out, "trajectory.csv") as fp:
        write_records_csv(records, fp)
    with _open(out, "trajectory.jsonl") as fp:
        write_records_jsonl(records, fp, status)
    _dump_json(out, "status.json", status)
    mon = {"constants": None, "monitors": report.to_dict()}
    if consts is not None:
        mon["constants"] = {k: _finite_or_none(getattr(consts, k)) for k in CONST_KEYS}
        mon["constants"]["onset_tau"] = consts.onset_tau
    _dump_json(out, "monitor.json", mon)
    if outcome.snapshots:
        with _open(out, "snapshots.jsonl") as fp:
            for tau, f in outcome.snapshots:
                write_snapshot(f, fp, tau=tau)
    return [_outcome_row(cfg, "run", outcome, consts, report)]


def mode_naive(cfg: ExperimentConfig, out: Path) -> list[dict]:
    params = build_params(cfg)
    u0, u1 = build_initial_data(cfg)
    prev, cur = u0, u1
    rows = [(0, field_sum(u0), _max_abs(u0), support_radius(u0)), (1, field_sum(u1), _max_abs(u1), support_radius(u1))]
    status, reason, tau = "budget", None, 1
    while tau < cfg.max_steps:
        try:
            nxt = step_naive(prev, cur, params).trim()
        except NumericOverflow:
            status = "overflow"
            break
        if nxt.exact and _bits(nxt) > cfg.max_bits:
            reason = f"rational size limit of {cfg.max_bits} bits reached"
            break
        prev, cur = cur, nxt
        tau += 1
        rows.append((tau, field_sum(cur), _max_abs(cur), support_radius(cur)))
    with _open(out, "naive.csv") as fp:
        w = csv.writer(fp, lineterminator="\n")
        w.writerow(["tau", "U", "max_abs_u", "radius"])
        for r in rows:
            w.writerow([_num(x) for x in r])
    st = {"status": status, "tau": tau}
    if reason:
        st["reason"] = reason
    _dump_json(out, "status.json", st)
    row = _base_row(cfg, "naive")
    row.update(status=status)
    return [row]


def _max_abs(f: Field):
    if f.exact:
        return max((abs(v) for _, v in f.items()), default=Fraction(0))
    return float(abs(f.data).max()) if f.data.size else 0.0


def _bits(f: Field) -> int:
    return max((max(v.numerator.bit_length(), v.denominator.bit_length()) for _, v in f.items()), default=0)


def mode_uniform(cfg: ExperimentConfig, out: Path) -> list[dict]:
    traj = iterate_uniform(cfg.g, cfg.p if not cfg.exact else int(cfg.p), cfg.delta, cfg.max_steps, exact=cfg.exact)
    status = "blowup" if traj.blowup_step is not None else "budget"
    with _open(out, "uniform.csv") as fp:
        write_uniform_csv(traj, fp)
    _dump_json(out, "status.json", {"status": status, "tau0": traj.blowup_step, "tau": len(traj.values) - 1})
    row = _base_row(cfg, "uniform")
    row.update(status=status, tau0=traj.blowup_step)
    return [row]


def mode_check(cfg: ExperimentConfig, out: Path) -> list[dict]:
    lemma = oracles.random_lemma_suite(cases=cfg.cases, seed=cfg.seed, max_s=cfg.max_s)
    suites = [lemma.summary(), oracles.convexity_suite(), oracles.phi_suite()]
    ok = (
        lemma.min_gap >= -oracles.JENSEN_TOL
        and suites[1]["min_gap"] >= -oracles.JENSEN_TOL
        and suites[2]["min_gap"] > 0
        and all(v == 0 for v in suites[2]["at_one"].values())
    )
    _dump_json(out, "check.json", suites)
    row = _base_row(cfg, "check")
    row.update(status="ok" if ok else "fail")
    return [row]


def mode_consistency(cfg: ExperimentConfig, out: Path) -> list[dict]:
    studies = [cons.refinement_study(s, [float(x) for x in cfg.deltas], p=float(cfg.p)) for s in cons.catalog(cfg.dims)]
    with _open(out, "consistency.csv") as fp:
        cons.write_consistency_csv(studies, fp)
    with _open(out, "consistency.json") as fp:
        cons.write_consistency_json(studies, fp)
    rows = []
    for st in studies:
        row = _base_row(cfg, st.sampler)
        row.update(d=st.d, status=st.status if st.slope is None else f"slope={st.slope:.4f}")
        rows.append(row)
    return rows


def mode_sweep(cfg: ExperimentConfig, out: Path) -> list[dict]:
    ps = cfg.p_values or (cfg.p,)
    deltas = cfg.delta_values or (cfg.delta,)
    rows = []
    cells = []
    for p in ps:
        for delta in deltas:
            label = f"p={_num(p)},delta={_num(delta)}"
            if cfg.sweep_kind == "uniform":
                traj = iterate_uniform(cfg.g, p if not cfg.exact else int(p), delta, cfg.max_steps, exact=cfg.exact)
                row = _base_row(cfg, label, p, delta)
                row.update(status="blowup" if traj.blowup_step is not None else "budget", tau0=traj.blowup_step)
            else:
                params = build_params(cfg, p, delta)
                u0, u1 = build_initial_data(cfg)
                outcome, consts, report = simulate_with_monitors(cfg, params, u0, u1, _K(cfg, u0, u1), snapshots=False)
                row = _outcome_row(cfg, label, outcome, consts, report, p, delta)
            rows.append(row)
            cells.append({"label": label, "p": p, "delta": delta, "region": row["region"],
                          "status": row["status"], "tau0": row.get("tau0"),
                          "critical_exponent": critical_exponent(cfg.d) if cfg.d >= 2 else None})
    with _open(out, "cells.jsonl") as fp:
        for c in cells:
            fp.write(json.dumps(c, sort_keys=True, default=_json_default) + "\n")
    return rows


MODE_RUNNERS = {
    "run": mode_run,
    "naive": mode_naive,
    "uniform": mode_uniform,
    "check": mode_check,
    "consistency": mode_consistency,
    "sweep": mode_sweep,
}


def run_experiment(cfg: ExperimentConfig, out_dir: Optional[str] = None) -> list[dict]:
    """Dispatch ``cfg`` and write its files plus ``summary.csv`` into the output directory."""
    out = Path(out_dir or cfg.output_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise ExperimentIOError(f"{out}: {e}") from e
    for w in cfg.warnings:
        log.warning("%s", w)
    rows = MODE_RUNNERS[cfg.mode](cfg, out)
    with _open(out, "summary.csv") as fp:
        emit_summary(rows, fp)
    return rows


# -- argument parsing ------------------------------------------------------------


def _parse_param(text: str) -> tuple[str, object]:
    if "=" not in text:
        raise ConfigError(f"--param {text!r}: expected KEY=VALUE")
    key, raw = text.split("=", 1)
    try:
        val = json.loads(raw)
    except json.JSONDecodeError:
        val = raw
    return key.strip(), val


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="lattice-blowup", description="Blow-up lattice simulator and checks.")
    sub = ap.add_subparsers(dest="mode", required=True)
    for mode in ("run", "naive", "uniform", "check", "consistency", "sweep"):
        sp = sub.add_parser(mode)
        sp.add_argument("--config", metavar="PATH", help="JSON config document")
        sp.add_argument("--out", metavar="DIR", help="output directory (overrides output_dir)")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--max-steps", type=int, dest="max_steps")
        sp.add_argument("--rational", action="store_true", help="exact rational arithmetic")
        sp.add_argument("--param", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config key (JSON value); initial_data.KEY for data keys")
        sp.add_argument("-v", "--verbose", action="store_true")
    return ap


def load_config(args) -> ExperimentConfig:
    doc: dict = {}
    if args.config:
        try:
            text = Path(args.config).read_text(encoding="utf-8")
        except OSError as e:
            raise ExperimentIOError(f"--config: {e}") from e
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as e:
            raise ConfigError(f"config: not valid JSON ({e.msg} at line {e.lineno})") from None
        if not isinstance(doc, dict):
            raise ConfigError("config: top level must be an object")
    if "mode" in doc and doc["mode"] != args.mode:
        raise ConfigError(f"mode: config says {doc['mode']!r} but subcommand is {args.mode!r}")
    over = dict(_parse_param(t) for t in args.param)
    over["mode"] = args.mode
    if args.seed is not None:
        over["seed"] = args.seed
    if args.max_steps is not None:
        over["max_steps"] = args.max_steps
    if args.rational:
        over["arithmetic"] = "rational"
    if args.out is not None:
        over["output_dir"] = args.out
    return config_from_dict(with_overrides(doc, over))


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        cfg = load_config(args)
        rows = run_experiment(cfg)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (ExperimentIOError, OSError) as e:
        print(f"io error: {e}", file=sys.stderr)
        return EXIT_IO
    for row in rows:
        print(json.dumps({k: row.get(k) for k in ("label", "status", "tau0")}, default=_json_default))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
