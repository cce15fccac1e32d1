"""Command-line front end (``leofair``)."""

from __future__ import annotations

import argparse
import csv
import math
import os
import sys
import warnings
from dataclasses import replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .categories import CATEGORIES
from .channel import linear_to_db, write_link_audit
from .config import load_plan
from .engine import (
    ExperimentPlan,
    RunRecord,
    Simulation,
    apply_profile,
    default_threads,
    derive_stream,
    run_experiment,
    sweep_bandwidth,
    sweep_rural_quota,
)
from .errors import ConfigError, LeofairError, QuotaUnfillableWarning
from .metrics import format_float
from .orbital import preset
from .policies import fairshare, pareto_oracle, random_instance, snr_priority, sum_rate
from .scenario import active_beams, export_users_csv

OUTPUT_ROOT_ENV = "LEOFAIR_OUTPUT_ROOT"
EXIT_OK, EXIT_RUNTIME, EXIT_CONFIG, EXIT_MISMATCH = 0, 1, 2, 3

REFERENCE = {
    "table2": {
        "equal_static": (0.352, 0.352, 1.01),
        "snr_priority": (0.393, 0.257, 1.84),
        "demand_proportional": (0.387, 0.298, 1.31),
        "fairshare": (0.280, 0.410, 0.68),
    },
    "table3": {"starlink-shell1": 1.84, "oneweb-phase1": 1.77, "kuiper-shell1": 1.60},
    "table4_sinr": {
        "equal_static": (42.3, 20.8),
        "snr_priority": (47.2, 32.7),
        "demand_proportional": (42.9, 22.0),
        "fairshare": (46.6, 32.1),
    },
    "table4_dgeo": {
        "equal_static": (1.00, 1.01),
        "snr_priority": (2.55, 1.84),
        "demand_proportional": (1.36, 1.31),
        "fairshare": (0.68, 0.68),
    },
    "table5a": {200e6: {"snr_priority": 1.29, "fairshare": 0.72}, 300e6: {"snr_priority": 1.65, "fairshare": 0.72}},
    "table5b": {0.25: 1.11, 0.30: 0.80, 0.35: 0.72, 0.40: 0.50},
}


# ---------------------------------------------------------------------------
# helpers


def _plan(args) -> ExperimentPlan:
    overrides = list(getattr(args, "set", None) or [])
    plan = load_plan(args.config, overrides)
    if getattr(args, "seed", None) is not None:
        plan = replace(plan, scenario=replace(plan.scenario, rng_seed=args.seed))
    if getattr(args, "no_interference", False):
        plan = replace(plan, interference=False)
    return apply_profile(plan, getattr(args, "profile", "full"))


def _output_root(args) -> Path:
    if getattr(args, "output", None):
        return Path(args.output)
    return Path(os.environ.get(OUTPUT_ROOT_ENV, "runs"))


def _run_dir(args, plan: ExperimentPlan, label: str = "run") -> Path:
    if getattr(args, "output", None):
        return Path(args.output)
    return _output_root(args) / f"{label}-{plan.plan_hash()[:12]}"


def _fmt(x: float, digits: int = 3) -> str:
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return "n/a"
    if isinstance(x, float) and math.isinf(x):
        return "inf"
    return f"{x:.{digits}f}"


def print_table(record: RunRecord, out=None) -> None:
    out = out or sys.stdout
    head = f"{'policy':<20} {'rho_urban':>9} {'rho_rural':>9} {'dgeo mean':>10} {'dgeo std':>9} {'SINR dB':>8} {'Jain':>6}"
    print(head, file=out)
    print("-" * len(head), file=out)
    for policy, e in record.aggregate.items():
        print(
            f"{policy:<20} {_fmt(e['rho_urban']['mean']):>9} {_fmt(e['rho_rural']['mean']):>9} "
            f"{_fmt(e['dgeo']['mean']):>10} {_fmt(e['dgeo']['std']):>9} {_fmt(e['avg_sinr_db']['mean'], 1):>8} "
            f"{_fmt(e['jain']['mean']):>6}",
            file=out,
        )
        if e["dgeo"]["n_inf"] or e["dgeo"]["n_undefined"]:
            print(f"{'':<20} dgeo sentinels: {e['dgeo']['n_inf']} inf, {e['dgeo']['n_undefined']} undefined", file=out)


class Report:
    """Side-by-side reference/simulated rows with a tolerance verdict."""

    def __init__(self, title: str):
        self.title = title
        self.rows: list[tuple] = []

    def add(self, label: str, reference, simulated, ok: bool, rule: str) -> None:
        self.rows.append((label, reference, simulated, bool(ok), rule))

    @property
    def ok(self) -> bool:
        return all(r[3] for r in self.rows)

    def print(self, out=None) -> None:
        out = out or sys.stdout
        print(self.title, file=out)
        print(f"{'item':<44} {'reference':>10} {'simulated':>10}  {'ok':<4} rule", file=out)
        for label, ref, sim, ok, rule in self.rows:
            ref_s = ref if isinstance(ref, str) else _fmt(ref)
            sim_s = sim if isinstance(sim, str) else _fmt(sim)
            print(f"{label:<44} {ref_s:>10} {sim_s:>10}  {'yes' if ok else 'NO':<4} {rule}", file=out)


def _dg(record: RunRecord, policy: str, stat: str = "mean") -> float:
    return record.aggregate[policy]["dgeo"][stat]


# ---------------------------------------------------------------------------
# subcommands


def cmd_run(args) -> int:
    plan = _plan(args)
    out = _run_dir(args, plan)
    record = run_experiment(plan, output_dir=out, threads=args.threads)
    print_table(record)
    print(f"\nrun directory: {out}")
    return EXIT_OK


def _reproduce_table2(args, plan) -> Report:
    rec = run_experiment(replace(plan, interference=True), output_dir=_run_dir(args, plan, "table2"), threads=args.threads)
    rep = Report("Policy comparison, Starlink shell, interference on")
    for policy, (ru, rr, dg) in REFERENCE["table2"].items():
        e = rec.aggregate[policy]
        rep.add(f"{policy} rho_urban", ru, e["rho_urban"]["mean"], True, "informational")
        rep.add(f"{policy} rho_rural", rr, e["rho_rural"]["mean"], True, "informational")
    eq, pr, dm, fs = (_dg(rec, p) for p in ("equal_static", "snr_priority", "demand_proportional", "fairshare"))
    rep.add("equal_static dgeo", 1.01, eq, 0.95 <= eq <= 1.05, "in [0.95, 1.05]")
    rep.add("snr_priority dgeo", 1.84, pr, pr > 1.3, "> 1.3")
    rep.add("snr_priority dgeo std", 0.93, _dg(rec, "snr_priority", "std"), _dg(rec, "snr_priority", "std") > 0.2, "> 0.2")
    rep.add("snr_priority dgeo max", 3.9, _dg(rec, "snr_priority", "max"), _dg(rec, "snr_priority", "max") > pr, "> mean")
    rep.add("demand_proportional dgeo", 1.31, dm, 1.1 <= dm <= 1.5, "in [1.1, 1.5]")
    fs_vals = rec.values("fairshare", "dgeo")
    rep.add("fairshare dgeo", 0.68, fs, 0.66 <= fs <= 0.70, "in [0.66, 0.70]")
    rep.add("fairshare dgeo distinct values", "1", str(len(set(fs_vals.tolist()))), len(set(fs_vals.tolist())) == 1, "exactly one")
    rep.add("ordering priority>demand>equal>fairshare", "yes", "yes" if pr > dm > eq > fs else "no", pr > dm > eq > fs, "strict")
    return rep


def _reproduce_table3(args, plan) -> Report:
    rep = Report("Cross-constellation comparison, interference on")
    fs_values = {}
    for name, ref in REFERENCE["table3"].items():
        p = replace(plan, constellation_name=name, constellation=preset(name), interference=True)
        rec = run_experiment(p, output_dir=_run_dir(args, p, f"table3-{name}"), threads=args.threads)
        pr = _dg(rec, "snr_priority")
        rep.add(f"{name} snr_priority dgeo", ref, pr, pr > 1.0, "> 1 (urban bias)")
        fs_values[name] = _dg(rec, "fairshare")
        rep.add(f"{name} fairshare dgeo", 0.68, fs_values[name], True, "informational")
    same = len(set(fs_values.values())) == 1
    rep.add("fairshare identical across constellations", "yes", "yes" if same else "no", same, "exact")
    return rep


def _reproduce_table4(args, plan) -> Report:
    on = run_experiment(replace(plan, interference=True), output_dir=_run_dir(args, plan, "table4-on"), threads=args.threads)
    off_plan = replace(plan, interference=False)
    off = run_experiment(off_plan, output_dir=_run_dir(args, off_plan, "table4-off"), threads=args.threads)
    rep = Report("Interference impact")
    for policy, (snr_ref, sinr_ref) in REFERENCE["table4_sinr"].items():
        snr = off.aggregate[policy]["avg_snr_db"]["mean"]
        sinr = on.aggregate[policy]["avg_sinr_db"]["mean"]
        drop = snr - sinr
        rep.add(f"{policy} SNR no interference (dB)", snr_ref, snr, True, "informational")
        rep.add(f"{policy} SINR with interference (dB)", sinr_ref, sinr, True, "informational")
        rep.add(f"{policy} SINR drop (dB)", snr_ref - sinr_ref, drop, 10.0 <= drop <= 30.0, "in [10, 30]")
    for policy, (ref_off, ref_on) in REFERENCE["table4_dgeo"].items():
        rep.add(f"{policy} dgeo no interference", ref_off, _dg(off, policy), True, "informational")
        rep.add(f"{policy} dgeo with interference", ref_on, _dg(on, policy), True, "informational")
    pr_on, pr_off = _dg(on, "snr_priority"), _dg(off, "snr_priority")
    rep.add("snr_priority dgeo lower with interference", "yes", "yes" if pr_on < pr_off else "no", pr_on < pr_off, "strict")
    same = set(on.values("fairshare", "dgeo").tolist()) == set(off.values("fairshare", "dgeo").tolist())
    rep.add("fairshare dgeo unchanged", "yes", "yes" if same else "no", same, "exact")
    return rep


def _reproduce_table5a(args, plan) -> Report:
    rows = sweep_bandwidth(plan, list(REFERENCE["table5a"]), threads=args.threads)
    rep = Report("Bandwidth sweep, single snapshot, no interference")
    for w, d in rows:
        for policy, ref in REFERENCE["table5a"][w].items():
            rep.add(f"{policy} dgeo @ {w / 1e6:g} MHz", ref, d[policy], True, "informational")
    (_, lo), (_, hi) = rows
    rep.add("snr_priority dgeo rises with bandwidth", "yes", "yes" if hi["snr_priority"] > lo["snr_priority"] else "no",
            hi["snr_priority"] > lo["snr_priority"], "strict")
    rep.add("fairshare dgeo identical", "yes", "yes" if hi["fairshare"] == lo["fairshare"] else "no",
            hi["fairshare"] == lo["fairshare"], "exact")
    return rep


def _reproduce_table5b(args, plan) -> Report:
    rows = sweep_rural_quota(plan, list(REFERENCE["table5b"]), threads=args.threads)
    rep = Report("Rural quota sweep, single snapshot, no interference")
    values = []
    for q, d in rows:
        ref = REFERENCE["table5b"][q]
        v = d["fairshare"]
        values.append(v)
        rep.add(f"fairshare dgeo @ rural {q:.0%}", ref, v, abs(v - ref) <= 0.08, "within 0.08")
        if q >= 0.30:
            rep.add(f"fairshare dgeo @ rural {q:.0%} below 1", "< 1", v, v < 1.0, "< 1")
    dec = all(a > b for a, b in zip(values, values[1:]))
    rep.add("fairshare dgeo strictly decreasing", "yes", "yes" if dec else "no", dec, "strict")
    return rep


def _reproduce_fig3(args, plan) -> Report:
    out = _run_dir(args, plan, "fig3")
    rec = run_experiment(replace(plan, interference=True), output_dir=out, threads=args.threads)
    rep = Report(f"Disparity time series ({out / 'timeseries_dgeo.csv'})")
    series = rec.aggregate["fairshare"]["dgeo_timeseries"]
    flat = len(set(series)) == 1
    rep.add("fairshare column constant", "yes", "yes" if flat else "no", flat, "exact")
    pr = rec.aggregate["snr_priority"]["dgeo_timeseries"]
    rep.add("snr_priority peak over snapshots", 3.9, max(pr), max(pr) > min(pr), "varies over time")
    return rep


REPRODUCERS = {
    "table2": _reproduce_table2,
    "table3": _reproduce_table3,
    "table4": _reproduce_table4,
    "table5a": _reproduce_table5a,
    "table5b": _reproduce_table5b,
    "fig3": _reproduce_fig3,
}


def cmd_reproduce(args) -> int:
    plan = _plan(args)
    rep = REPRODUCERS[args.target](args, plan)
    rep.print()
    return EXIT_OK if rep.ok else EXIT_MISMATCH


def cmd_sweep(args) -> int:
    if not args.values:
        print("sweep needs at least one --values entry", file=sys.stderr)
        return EXIT_CONFIG
    plan = _plan(args)
    if args.parameter == "bandwidth":
        rows = sweep_bandwidth(plan, [v * 1e6 for v in args.values], threads=args.threads)
        rows = [(w / 1e6, d) for w, d in rows]
        label = "bandwidth_mhz"
    else:
        rows = sweep_rural_quota(plan, args.values, threads=args.threads)
        label = "rural_quota"
    root = _output_root(args)
    root.mkdir(parents=True, exist_ok=True)
    path = root / f"sweep_{args.parameter}.csv"
    policies = list(rows[0][1])
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([label] + policies)
        for v, d in rows:
            w.writerow([format_float(v)] + [format_float(d[p]) for p in policies])
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow([label] + policies)
    for v, d in rows:
        w.writerow([f"{v:g}"] + [_fmt(d[p], 4) for p in policies])
    print(f"\nwritten: {path}")
    return EXIT_OK


def cmd_audit(args) -> int:
    plan = _plan(args)
    sim = Simulation(plan)
    t = args.snapshot * plan.scenario.snapshot_interval_s
    grid, steered = sim.link_grid(t)
    active = active_beams(grid) if plan.interference else None
    out = _run_dir(args, plan, "audit")
    out.mkdir(parents=True, exist_ok=True)
    export_users_csv(sim.users, out / "users.csv")
    rows = write_link_audit(out / "links.csv", grid, plan.link, active, plan.interference)
    snap = sim.snapshot(args.snapshot)
    snr_db = linear_to_db(snap.serving_psd / snap.noise_psd)
    sinr_db = linear_to_db(snap.serving_psd / (snap.interference_psd + snap.noise_psd))
    print(f"snapshot {args.snapshot} (t={t:g} s): {grid.shape[1]} satellites visible, steered: {steered.tolist()}")
    print(f"{'category':<10} {'users':>6} {'median SNR dB':>14} {'median SINR dB':>15}")
    for i, c in enumerate(CATEGORIES):
        m = sim.categories == i
        if m.any():
            print(f"{c:<10} {int(m.sum()):>6} {np.median(snr_db[m]):>14.2f} {np.median(sinr_db[m]):>15.2f}")
    print(f"\n{rows} link rows written to {out / 'links.csv'}; users in {out / 'users.csv'}")
    return EXIT_OK


def cmd_oracle_check(args) -> int:
    rng = derive_stream(args.seed, ["oracle-check"])
    failures = 0
    for i in range(args.instances):
        req, quotas = random_instance(rng)
        best = pareto_oracle(req, quotas)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", QuotaUnfillableWarning)
            got = sum_rate(req, fairshare(req, quotas))
        free_best = pareto_oracle(req, None)
        free_got = sum_rate(req, snr_priority(req))
        if got != best or free_got != free_best:
            failures += 1
            print(f"instance {i}: fairshare {got!r} vs oracle {best!r}; priority {free_got!r} vs {free_best!r}")
            print(f"  W={req.total_bandwidth_hz!r} b_min={req.min_user_bandwidth_hz!r} quotas={quotas.as_tuple()}")
            print(f"  categories={req.categories.tolist()} sinr={req.sinr.tolist()}")
    print(f"{args.instances - failures}/{args.instances} optimal")
    return EXIT_OK if failures == 0 else EXIT_MISMATCH


def cmd_validate(args) -> int:
    paths = args.paths or sorted(Path("configs").glob("*.toml"))
    if not paths:
        print("no config files given and none found in ./configs", file=sys.stderr)
        return EXIT_CONFIG
    status = EXIT_OK
    for p in paths:
        try:
            plan = load_plan(p)
            print(f"ok   {p} ({plan.constellation_name}, {plan.scenario.num_users} users, interference={'on' if plan.interference else 'off'})")
        except ConfigError as exc:
            print(f"FAIL {p}: {exc}")
            status = EXIT_CONFIG
    return status


# ---------------------------------------------------------------------------
# parser


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="experiment plan (TOML)")
    p.add_argument("--seed", type=int, help="override scenario.rng_seed")
    p.add_argument("--threads", type=int, default=default_threads(), help="worker threads (results do not depend on it)")
    p.add_argument("--output", type=Path, help=f"output directory (default: ${OUTPUT_ROOT_ENV} or ./runs)")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key, e.g. scenario.num_users=200")
    p.add_argument("--no-interference", action="store_true", help="disable co-channel interference")
    p.add_argument("--profile", choices=("desk", "full"), default="full")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="leofair", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run an experiment and print the aggregate table")
    _common(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("reproduce", help="rerun a reference table and compare")
    p.add_argument("target", choices=sorted(REPRODUCERS))
    _common(p)
    p.set_defaults(func=cmd_reproduce)

    p = sub.add_parser("sweep", help="single-snapshot, interference-free parameter sweep")
    p.add_argument("parameter", choices=("bandwidth", "rural_quota"))
    p.add_argument("--values", type=float, nargs="*", default=None, help="MHz for bandwidth, fractions for rural_quota")
    _common(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("audit", help="dump per-link budgets and the user population")
    p.add_argument("--snapshot", type=int, default=0)
    _common(p)
    p.set_defaults(func=cmd_audit)

    p = sub.add_parser("oracle-check")
    p.add_argument("--instances", type=int, default=100)
    p.add_argument("--seed", type=int, default=7)
    p.set_defaults(func=cmd_oracle_check)

    p = sub.add_parser("validate", help="check config files")
    p.add_argument("paths", nargs="*", type=Path)
    p.set_defaults(func=cmd_validate)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "threads", 1) is not None and getattr(args, "threads", 1) < 1:
        parser.error("--threads must be at least 1")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (LeofairError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
