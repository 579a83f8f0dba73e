"""Command line entry point.

Subcommands: ``run``, ``sweep``, ``region``, ``table1`` and ``validate``.
A scenario argument is a JSON file or the name of a built-in scenario
(fig5, fig6, fig7, fig8_tandem, fig9_overlapping, table1).
"""

from __future__ import annotations

import argparse
import csv
import math
import sys
from pathlib import Path

from ..netmodel import thresholds, validate_non_overlapping
from ..region import RegionError, boundary, decomposition_for_oracle, feasibility
from ..policies import canonical_name
from .experiments import mean_by, policy_params, sweep, table1, write_rows
from .scenario import Scenario, built_in_scenarios, load_scenario


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, help="scenario seed")
    p.add_argument("--horizon", type=int, help="slots to simulate")
    p.add_argument("--policy", help="routing policy name")
    p.add_argument("--discipline", help="forwarder discipline name")
    p.add_argument("--T", type=int, help="tunnel threshold")
    p.add_argument("--dummy-packets", action="store_true", help="pad injections with synthetic packets")
    p.add_argument("--out", default=".", help="output directory")


def _apply(sc: Scenario, args) -> Scenario:
    if args.seed is not None:
        sc = sc.with_(seed=args.seed)
    if args.horizon is not None:
        sc = sc.with_(horizon=args.horizon)
    if args.policy is not None:
        name = canonical_name(args.policy)
        sc = sc.with_policy(name, **policy_params(sc, name))
    if args.T is not None:
        sc = sc.with_(policy={**sc.policy, "T": args.T})
    if args.discipline is not None:
        d = {"name": args.discipline}
        if args.discipline.replace("_", "-") in ("priority", "strict-priority"):
            d["order"] = sc.discipline.get("order") or [s.id for s in sc.sessions]
        sc = sc.with_(discipline=d)
    if args.dummy_packets:
        sc = sc.with_(dummy_packets=True)
    return sc


def _floats(text: str) -> list[float]:
    return [float(x) for x in text.split(",") if x.strip()]


def _outdir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_run(args) -> int:
    sc = _apply(load_scenario(args.scenario), args)
    base = Path(args.scenario).parent if Path(args.scenario).exists() else None
    res = sc.simulator(record=True, base_dir=base).run()
    out = _outdir(args)
    res.write_trace(out / f"{sc.name}_trace.csv")
    res.write_summary(out / f"{sc.name}_summary.txt")
    print(f"mean_backlog={res.mean_backlog:.4f} mean_delay={res.mean_delay:.4f}")
    bad = {k: v for k, v in res.violations.items() if v}
    if bad:
        print(f"invariant violations: {bad}", file=sys.stderr)
    return 0


def cmd_sweep(args) -> int:
    sc = _apply(load_scenario(args.scenario), args)
    loads = _floats(args.loads) if args.loads else sc.extra.get("loads", [0.2, 0.4, 0.6, 0.8])
    policies = args.policies.split(",") if args.policies else sc.extra.get("policies", [sc.policy["name"]])
    split = args.split or sc.extra.get("split", "half")
    seeds = [int(x) for x in args.seeds.split(",")]
    rows = sweep(sc, loads, policies, seeds=seeds, split=split, T=args.T)
    out = _outdir(args) / f"{sc.name}_sweep.csv"
    write_rows(out, rows)
    for r in rows:
        print(f"{r.load:g},{r.policy},{r.seed},{r.classification},{r.mean_backlog:.3f}")
    return 0


def cmd_region(args) -> int:
    sc = load_scenario(args.scenario)
    ov = sc.overlay()
    sessions = list(sc.sessions)
    ids = [s.id for s in sessions]
    rays: list[tuple[str, dict]] = []
    if args.ray:
        for text in args.ray:
            w = _floats(text)
            if len(w) != len(ids):
                raise SystemExit(f"ray {text!r} needs {len(ids)} weights")
            rays.append((text, dict(zip(ids, w))))
    elif len(ids) == 2:
        for k in range(args.angles):
            theta = 90.0 * k / (args.angles - 1)
            w = (math.cos(math.radians(theta)), math.sin(math.radians(theta)))
            rays.append((f"{theta:g}", dict(zip(ids, w))))
    else:
        rays = [(str(c), {c: 1.0}) for c in ids]
    out = _outdir(args)
    with open(out / f"{sc.name}_boundary.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["ray", *[f"w.{c}" for c in ids], "rho", *[f"lambda.{c}" for c in ids], "note"])
        for label, d in rays:
            bp = boundary(d, ov, sessions)
            w.writerow([label, *[repr(d.get(c, 0.0)) for c in ids], repr(bp.rho),
                        *[repr(bp.rho * d.get(c, 0.0)) for c in ids], bp.note])
            print(f"ray {label}: rho*={bp.rho:.6f} {bp.note}".rstrip())
    fd = feasibility(sessions, ov)
    print(f"eps* at scenario rates = {fd.slack:.6f}")
    try:
        dec = decomposition_for_oracle(sessions, ov)
    except RegionError as exc:
        print(f"no oracle decomposition: {exc}")
    else:
        dec.save(out / f"{sc.name}_decomposition.json")
    return 0


def cmd_table1(args) -> int:
    sc = _apply(load_scenario(args.scenario), args)
    lambdas = _floats(args.lambdas) if args.lambdas else sc.extra.get("lambdas", [0.8, 0.85, 0.9, 0.95, 0.99])
    discs = sc.extra.get("disciplines", ["fifo", "hlpps", "lqf", "priority"])
    seeds = [int(x) for x in args.seeds.split(",")]
    rows = table1(sc, lambdas, discs, seeds=seeds, priority_order=sc.extra.get("priority_order"))
    write_rows(_outdir(args) / f"{sc.name}_table1.csv", rows)
    m = mean_by(rows, ["interpretation", "lam", "discipline"], "mean_delay")
    for interp in ("per-session", "half-total"):
        print(f"[{interp}]  lambda  " + "  ".join(f"{d:>9}" for d in discs))
        for lam in lambdas:
            print(f"{lam:>16g}  " + "  ".join(f"{m[(interp, lam, d)]:9.3f}" for d in discs))
    return 0


def cmd_validate(args) -> int:
    sc = load_scenario(args.scenario)
    ov = sc.overlay()
    print(f"routers: {list(ov.routers)}")
    for t in ov.tunnels:
        print(f"tunnel {t}: path={list(t.path)} M={t.M} R_in={t.R_in} R_min={t.R_min} R_max={t.R_max} T0_term={t.T0_term}")
    rep = validate_non_overlapping(ov)
    print("non-overlapping: " + ("yes" if rep.ok else f"no {list(rep.conflicts)}"))
    th = thresholds(ov)
    print(f"T0={th.T0} T_floor={th.floor} F_max(at floor)={th.F_max}")
    return 0 if rep.ok or args.allow_overlap else 1


def build_parser() -> argparse.ArgumentParser:
    names = ", ".join(built_in_scenarios())
    ap = argparse.ArgumentParser(prog="overlaybp", description=f"Overlay backpressure simulator. Built-ins: {names}.")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="simulate one scenario, write trace CSV and summary")
    p.add_argument("scenario")
    _common(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="stability and backlog over a load grid")
    p.add_argument("scenario")
    _common(p)
    p.add_argument("--loads", help="comma-separated loads")
    p.add_argument("--policies", help="comma-separated policy names")
    p.add_argument("--seeds", default="0", help="comma-separated seeds")
    p.add_argument("--split", help="half, equal or single")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("region", help="throughput region boundary and oracle decomposition")
    p.add_argument("scenario")
    p.add_argument("--ray", action="append", help="comma-separated session weights (repeatable)")
    p.add_argument("--angles", type=int, default=7, help="number of rays for two-session scenarios")
    p.add_argument("--out", default=".", help="output directory")
    p.set_defaults(func=cmd_region)

    p = sub.add_parser("table1", help="BP-T delay across forwarder disciplines")
    p.add_argument("scenario", nargs="?", default="table1")
    _common(p)
    p.add_argument("--lambdas", help="comma-separated loads")
    p.add_argument("--seeds", default="0", help="comma-separated seeds")
    p.set_defaults(func=cmd_table1)

    p = sub.add_parser("validate", help="check an overlay and print its constants")
    p.add_argument("scenario")
    p.add_argument("--allow-overlap", action="store_true", help="exit 0 even when tunnels overlap")
    p.set_defaults(func=cmd_validate)
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    raise SystemExit(main())
