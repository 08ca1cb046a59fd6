"""Command-line entry point.

    qtdma schedule  --topology symmetric --load 25 --fidelity 0.55 --out run.json
    qtdma sweep     --topology symmetric --fidelity 0.55 --load 25 50 100 --out rows.csv
    qtdma validate  run.json
    qtdma oracle    --task 5:6 --task 1:6
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

from .bench import RATE_MENU, ExperimentConfig, generate_demands, repetition_rng, run_experiment
from .io import bundle_from_dict, bundle_to_dict, load_demands, load_topology
from .metrics import check_schedule, report
from .oracle import brute_force_feasible
from .pipeline import SCHEDULERS, run_pipeline
from .protoselect import SelectionConfig
from .pts import PeriodicTask, np_edf


def _selection_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--topology", default="symmetric",
                   help="topology JSON file, or the name of a bundled one "
                        "(symmetric, chain3, surfnet_placeholder)")
    p.add_argument("--t-slot", type=float, default=10.0, help="slot length in ms")
    p.add_argument("--pivot", choices=["midpoint", "length"], default="midpoint")
    p.add_argument("--nesting-cap", type=int, default=4)
    p.add_argument("--attempt-multiplier", type=float, default=1.0,
                   help="link generation windows last this many expected attempts")


def _selection(args) -> SelectionConfig:
    return SelectionConfig(t_slot=args.t_slot, pivot=args.pivot, nesting_cap=args.nesting_cap,
                           attempt_multiplier=args.attempt_multiplier)


def cmd_schedule(args) -> int:
    t = load_topology(args.topology)
    if args.demands:
        demands = load_demands(args.demands)
    else:
        rng = repetition_rng(args.seed, 0)
        demands = generate_demands(t.end_nodes(), args.rates, args.load, args.fidelity, rng,
                                   args.j_max)
    res = run_pipeline(t, demands, args.scheduler, _selection(args))
    rep = res.report
    for did, why in res.prepared.rejected:
        print(f"rejected {did}: {why}", file=sys.stderr)
    print(f"{'demand':<8} {'r_min':>10} {'achieved':>10} {'jitter_s2':>12} satisfied")
    for d, _ in res.prepared.pairs:
        m = rep.per_demand[d.id]
        jit = "-" if m.jitter is None else f"{m.jitter:.3e}"
        print(f"{d.id:<8} {d.r_min:>10.4f} {m.achieved_rate:>10.4f} {jit:>12} {m.satisfied}")
    print(f"network throughput {rep.network_throughput:.4f} ebit/s over "
          f"{res.schedule.length} slots")
    if args.out:
        protocols = {d.id: p for d, p in res.prepared.pairs}
        bundle = bundle_to_dict([d for d, _ in res.prepared.pairs], protocols, res.schedule,
                                scheduler=args.scheduler,
                                rejected=[list(x) for x in res.prepared.rejected])
        with open(args.out, "w") as fh:
            json.dump(bundle, fh, indent=1)
            fh.write("\n")
    return 0


def cmd_sweep(args) -> int:
    cfg = ExperimentConfig(
        topology_path=args.topology, t_slot=args.t_slot, fidelity_levels=tuple(args.fidelity),
        rate_menu=tuple(args.rates), load_targets=tuple(args.load),
        repetitions=args.repetitions, seed=args.seed, schedulers=tuple(args.scheduler),
        pivot=args.pivot, nesting_cap=args.nesting_cap,
        attempt_multiplier=args.attempt_multiplier, j_max=args.j_max, workers=args.workers)
    res = run_experiment(cfg)
    rows = res.rows_csv()
    if args.out:
        with open(args.out, "w", newline="") as fh:
            fh.write(rows)
    else:
        sys.stdout.write(rows)
    if args.aggregate_out:
        with open(args.aggregate_out, "w", newline="") as fh:
            fh.write(res.aggregate_csv())
    for a in res.aggregate():
        print(f"{a['scheduler']:<13} F={a['fidelity']} load={a['load']}: "
              f"throughput {a['mean_throughput']:.3f} +- {a['sem_throughput']:.3f} ebit/s",
              file=sys.stderr)
    return 0


def cmd_validate(args) -> int:
    with open(args.bundle) as fh:
        demands, protocols, sched = bundle_from_dict(json.load(fh))
    pairs = [(d, protocols[d.id]) for d in demands]
    violations = check_schedule(sched, pairs)
    for v in violations:
        print(v)
    if violations:
        print(f"{len(violations)} violation(s)")
        return 1
    rep = report(sched, pairs)
    print(f"valid: {len(sched.entries)} instances, network throughput "
          f"{rep.network_throughput:.4f} ebit/s")
    return 0


def _task(spec: str) -> tuple[int, int]:
    try:
        c, t = spec.split(":")
        return int(c), int(t)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected WCET:PERIOD, got {spec!r}") from None


def cmd_oracle(args) -> int:
    tasks = [PeriodicTask(f"t{i}", c, t) for i, (c, t) in enumerate(args.task)]
    res = brute_force_feasible(tasks, work_conserving=not args.allow_idle)
    edf = np_edf(tasks)
    print(json.dumps({"feasible": res.feasible, "witness": res.witness,
                      "np_edf": edf.starts,
                      "np_edf_unscheduled": sorted(map(list, edf.unscheduled))}, indent=1))
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="qtdma",
                                 description="Build and evaluate TDMA entanglement schedules.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("schedule", help="schedule one batch of demands end to end")
    _selection_args(p)
    p.add_argument("--demands", help="demand JSON file; otherwise demands are generated")
    p.add_argument("--load", type=float, default=25.0)
    p.add_argument("--fidelity", type=float, default=0.55)
    p.add_argument("--rates", type=float, nargs="+", default=list(RATE_MENU))
    p.add_argument("--j-max", type=float, default=None, help="jitter bound in s^2 for all demands")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--scheduler", choices=SCHEDULERS, default="rcpsp-np-edf")
    p.add_argument("--out", help="write demands, protocols and schedule as JSON")
    p.set_defaults(func=cmd_schedule)

    p = sub.add_parser("sweep", help="run the Monte-Carlo experiment grid")
    _selection_args(p)
    p.add_argument("--fidelity", type=float, nargs="+", default=[0.55])
    p.add_argument("--load", type=float, nargs="+", default=[100.0])
    p.add_argument("--rates", type=float, nargs="+", default=list(RATE_MENU))
    p.add_argument("--repetitions", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--scheduler", choices=SCHEDULERS, nargs="+", default=list(SCHEDULERS))
    p.add_argument("--j-max", type=float, default=None)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", help="per-demand CSV (default: stdout)")
    p.add_argument("--aggregate-out", help="aggregate CSV per scheduler and cell")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("validate", help="re-check a schedule written by `schedule --out`")
    p.add_argument("bundle")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("oracle", help="brute-force a tiny periodic task set")
    p.add_argument("--task", type=_task, action="append", required=True, metavar="WCET:PERIOD")
    p.add_argument("--allow-idle", action="store_true",
                   help="also explore schedules that idle while work is pending")
    p.set_defaults(func=cmd_oracle)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
