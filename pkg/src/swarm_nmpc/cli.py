"""Command-line entry points.

    swarm-nmpc run     --scenario box.yaml --seed 7 --out out/
    swarm-nmpc batch   --scenario box.yaml --seeds 100 --out out/
    swarm-nmpc verify  --records out/ --rho 0.35 --eps 0.15 --delta 0.99
    swarm-nmpc metrics --records out/

``run``/``batch`` write trial records plus a manifest into the output
directory; ``verify`` and ``metrics`` consume such directories and write
machine-readable reports next to the records while printing a text
summary. Exit code 0 on success, nonzero on configuration errors.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

from .harness import batch, run_trial
from .metrics import metrics_report, sed_series
from .records import load_records, write_manifest
from .scenario import load_scenario
from .verification import TubeSpec, verify_records


def _cmd_run(args) -> int:
    config = load_scenario(args.scenario)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    seed = config.seed if args.seed is None else args.seed
    name = f"trial_{seed:05d}.jsonl" + (".gz" if args.gzip else "")
    record = run_trial(config, seed=seed, out_path=out_dir / name, compress=args.gzip)
    write_manifest(out_dir, dataclasses.asdict(config),
                   [{"file": name, "seed": seed, "status": record.status}])
    print(f"trial seed={seed} status={record.status} steps={record.times.size} "
          f"record={out_dir / name}")
    return 0 if record.status in ("completed",) else 1


def _cmd_batch(args) -> int:
    config = load_scenario(args.scenario)
    manifest = batch(config, n_seeds=args.seeds, out_dir=args.out,
                     compress=args.gzip, workers=args.workers, seed0=args.seed)
    doc = json.loads(Path(manifest).read_text())
    statuses = [t["status"] for t in doc["trials"]]
    done = sum(s == "completed" for s in statuses)
    print(f"batch: {done}/{len(statuses)} trials completed; manifest={manifest}")
    for t in doc["trials"]:
        if t["status"] != "completed":
            print(f"  trial seed={t['seed']}: {t['status']}")
    return 0


def _cmd_verify(args) -> int:
    records = load_records(args.records)
    config = records[0].config
    spec = TubeSpec(rho=args.rho, eps=args.eps, T=config["planning_interval"],
                    delta=args.delta)
    report = verify_records(records, spec, n_folds=args.folds,
                            aggregate=args.aggregate)
    out_path = Path(args.records) / "verify_report.json"
    out_path.write_text(json.dumps(report, sort_keys=True, indent=1) + "\n")

    print(f"tube verification: rho={spec.rho} m, eps={spec.eps} m, "
          f"T={spec.T} s, delta={spec.delta}")
    print(f"  samples: {report['n_samples']} "
          f"(excluded {report['n_excluded']} truncated intervals)")
    print(f"  sample mean: {report['sample_mean']:.6f}")
    print(f"  margin:      {report['margin']:.6f}")
    print(f"  bound:       {report['bound']:.6f}")
    if "folds" in report:
        print(f"  cross-validation ({len(report['folds'])} folds):")
        for f in report["folds"]:
            mark = "pass" if f["passed"] else "FAIL"
            print(f"    fold {f['fold']}: bound {f['bound']:.4f} "
                  f"holdout mean {f['holdout_mean']:.4f} [{mark}]")
        print(f"  all folds passed: {report['all_folds_passed']}")
    print(f"  report: {out_path}")
    return 0


def _cmd_metrics(args) -> int:
    records = load_records(args.records)
    report = metrics_report(records, stride=args.stride)
    out_dir = Path(args.records)
    (out_dir / "metrics_report.json").write_text(
        json.dumps(report, sort_keys=True, indent=1) + "\n")

    from .aircraft import load_aircraft_params
    cfg = records[0].config
    params = load_aircraft_params(cfg.get("aircraft_file"))
    print(f"swarm metrics: {report['n_agents']} agents, mass {report['mass']} kg, "
          f"speed {report['speed']} m/s, inflation radius {report['inflation_radius']} m")
    if "scenario_sed" in report:
        print(f"  scenario-approx SED: {report['scenario_sed']:.6g} J/m^3 "
              f"(volume {report['scenario_volume']:.4g} m^3)")
    for entry in report["trials"]:
        print(f"  trial {entry['trial']} [{entry['status']}]")
        if "ta_sed" in entry:
            print(f"    TA-SED {entry['ta_sed']:.4g} J/m^3 | min dist "
                  f"{entry['min_distance']:.4f} m | avg min dist "
                  f"{entry['avg_min_distance']:.4f} m | avg AoA {entry['avg_alpha']:.4f} rad | "
                  f"density avg {entry['avg_density']:.4g} max {entry['max_density']:.4g} kg/m^3")
    # Per-step series for plotting.
    for rec, entry in zip(records, report["trials"]):
        if rec.times.size == 0 or rec.n_agents < 2:
            continue
        series = sed_series(rec, report["mass"], report["inflation_radius"],
                            stride=args.stride)
        doc = {
            "trial": entry["trial"],
            "t": [float(v) for v in series.times],
            "sed": [float(v) for v in series.values],
            "min_distance": [float(v) for v in rec.pairwise.min(axis=1)],
            "inflation_radius": series.inflation_radius,
        }
        path = out_dir / f"metrics_series_{entry['trial']}.json"
        path.write_text(json.dumps(doc, sort_keys=True) + "\n")
    print(f"  report: {out_dir / 'metrics_report.json'}")
    return 0


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="swarm-nmpc",
                                     description="fixed-wing swarm NMPC simulator and analysis toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run one trial")
    p.add_argument("--scenario", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--gzip", action="store_true")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("batch", help="run many seeded trials")
    p.add_argument("--scenario", required=True)
    p.add_argument("--seeds", type=int, required=True)
    p.add_argument("--seed", type=int, default=None, help="first seed (default: scenario seed)")
    p.add_argument("--out", required=True)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--gzip", action="store_true")
    p.set_defaults(func=_cmd_batch)

    p = sub.add_parser("verify", help="tube-violation bound from records")
    p.add_argument("--records", required=True)
    p.add_argument("--rho", type=float, required=True)
    p.add_argument("--eps", type=float, required=True)
    p.add_argument("--delta", type=float, default=0.99)
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--aggregate", choices=("interval", "trial"), default="interval")
    p.set_defaults(func=_cmd_verify)

    p = sub.add_parser("metrics", help="swarm metrics from records")
    p.add_argument("--records", required=True)
    p.add_argument("--stride", type=int, default=1)
    p.set_defaults(func=_cmd_metrics)
    return parser


def main(argv=None) -> int:
    parser = make_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
