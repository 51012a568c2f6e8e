"""Command-line entry point.

Subcommands bind generation, simulation, tuning, and model export into
reproducible runs: every command writes a manifest with its resolved
configuration and seed, and re-running from that manifest reproduces
byte-identical outputs.

Exit codes: 0 success, 1 internal error, 2 usage or input error.
"""

from __future__ import annotations

import argparse
import json
import sys
import traceback
from pathlib import Path

import numpy as np

from . import __version__
from .domain import save_json
from .instancegen import GenParams, WeekInstance, generate_week
from .mip import MipExportError, export_mip
from .reactive import (
    STRATEGY_NAMES,
    PolicyError,
    ReactionPolicy,
    UpdateStrategy,
    default_policy,
)
from .report import (
    convergence_figure,
    gantt_figure,
    save_svg,
    write_metrics_csv,
    write_replications_csv,
    write_trace_jsonl,
    write_tuning_csv,
)
from .simulator import run_replications, seed_stream, simulate_week
from .tuner import TunerConfig, tune


class UsageError(Exception):
    pass


def _read_json(path: str) -> dict:
    p = Path(path)
    if not p.exists():
        raise UsageError(f"input file not found: {p}")
    try:
        with open(p, encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise UsageError(f"malformed JSON in {p}: {exc}") from exc


def _write_manifest(out_dir: Path, command: str, config: dict) -> None:
    manifest = {"tool": "orsched", "version": __version__,
                "command": command, "config": config}
    with open(out_dir / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _load_week(path: str) -> WeekInstance:
    data = _read_json(path)
    try:
        return WeekInstance.from_dict(data)
    except (KeyError, ValueError) as exc:
        raise UsageError(f"invalid week instance {path}: {exc}") from exc


def cmd_generate(args) -> int:
    if args.params:
        try:
            params = GenParams.from_dict(_read_json(args.params))
        except TypeError as exc:
            raise UsageError(f"invalid generation parameters: {exc}") from exc
    else:
        params = GenParams()
    if args.seed is not None:
        params.seed = args.seed
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    week = generate_week(params)
    week.save(out / "week.json")
    _write_manifest(out, "generate", {"params": params.to_dict(),
                                      "seed": params.seed,
                                      "summary": week.summary()})
    print(f"wrote {out / 'week.json'} ({week.summary()})")
    return 0


def cmd_simulate(args) -> int:
    week = _load_week(args.week)
    if args.policy:
        try:
            policy = ReactionPolicy.from_dict(_read_json(args.policy))
        except PolicyError as exc:
            raise UsageError(str(exc)) from exc
    else:
        policy = default_policy()

    names = list(STRATEGY_NAMES) if args.strategy == "all" else [args.strategy]
    for name in names:
        missing = policy.covers(name)
        if missing:
            raise UsageError(
                f"policy is missing reaction vectors for strategy {name}: "
                f"{', '.join(missing)}")

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    summary_rows = []
    for name in names:
        strategy = UpdateStrategy.named(name)
        agg = run_replications(week, policy, strategy, args.replications,
                               base_seed=args.seed,
                               check_every_update=args.check)
        summary_rows.append({
            "strategy": name,
            "utilisation": agg.mean["utilisation"],
            "overtime": agg.mean["overtime"],
            "ne_time_to_surgery": agg.mean["ne_time_to_surgery"],
            "patients_treated": agg.mean["patients_treated"],
            "runtime_s": agg.mean["runtime_s"],
            "avg_updates": agg.mean["updates"],
            "update_time_s": agg.mean["update_time_s"],
        })
        write_replications_csv(out / f"replications_{name}.csv", agg.rows)

        # Replay the first replication for the trace and Gantt figures.
        rng = np.random.default_rng(seed_stream(args.seed, 1)[0])
        detail = simulate_week(week, policy, strategy, rng,
                               collect_trace=True, keep_schedules=True)
        write_trace_jsonl(out / f"trace_{name}.jsonl", detail.trace)
        if args.gantt:
            for day, schedule in enumerate(detail.day_schedules):
                fig = gantt_figure(schedule, week.rooms, week.horizon,
                                   title=f"{name} day {day}")
                save_svg(fig, out / f"gantt_{name}_day{day}.svg")
        print(f"{name}: utilisation={agg.mean['utilisation']:.2f} "
              f"overtime={agg.mean['overtime']:.2f} "
              f"ne_wait={agg.mean['ne_time_to_surgery']:.2f} "
              f"treated={agg.mean['patients_treated']:.1f} "
              f"updates={agg.mean['updates']:.1f}")

    write_metrics_csv(out / "metrics.csv", summary_rows)
    _write_manifest(out, "simulate", {
        "week": str(args.week), "policy": str(args.policy) if args.policy else None,
        "strategies": names, "replications": args.replications,
        "seed": args.seed, "check": args.check, "gantt": args.gantt,
    })
    return 0


def cmd_tune(args) -> int:
    if bool(args.week) == bool(args.params):
        raise UsageError("provide exactly one of --week or --params")
    if args.week:
        calibration = _load_week(args.week)
    else:
        try:
            calibration = GenParams.from_dict(_read_json(args.params))
        except TypeError as exc:
            raise UsageError(f"invalid generation parameters: {exc}") from exc

    config = TunerConfig(strategy=args.strategy, n_runs=args.runs,
                         max_iterations=args.iterations,
                         perturbation_scale=args.scale, seed=args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    result = tune(config, calibration)
    result.policy.save(out / "policy.json")
    write_tuning_csv(out / "tuning_trace.csv", result.trace)
    save_svg(convergence_figure(result.trace,
                                title=f"{args.strategy} tuning convergence"),
             out / "convergence.svg")
    _write_manifest(out, "tune", {
        "week": str(args.week) if args.week else None,
        "params": str(args.params) if args.params else None,
        "strategy": args.strategy, "runs": args.runs,
        "iterations": args.iterations, "scale": args.scale,
        "seed": args.seed, "converged": result.converged,
        "iterations_used": result.iterations,
    })
    best = result.trace[-1]["best_utilisation"] if result.trace else 0.0
    print(f"tuned {args.strategy}: best utilisation {best:.2f} "
          f"after {result.iterations} iterations "
          f"({'converged' if result.converged else 'iteration cap'})")
    return 0


def cmd_export_mip(args) -> int:
    week = _load_week(args.week)
    if not (0 <= args.day < 7):
        raise UsageError(f"day must be in 0..6, got {args.day}")
    broken = set(week.breakdowns.get(args.day, ()))
    cancelled = set(week.cancellations.get(args.day, ()))
    inst = week.day_instance(args.day, broken, cancelled)
    for d, _, p in week.nonelective_requests:
        if d == args.day:
            inst.add_patient(p)

    # Smallest sufficient entity sets: only rooms/surgeons usable by the
    # day's patients.
    needed_specs = {p.specialty for p in inst.patients}
    rooms = [r for r in inst.rooms if r.working and (r.specialties & needed_specs)]
    surgeon_ids = set()
    for p in inst.patients:
        surgeon_ids.update(p.eligible_surgeons)
    surgeons = [s for s in inst.surgeons if s.id in surgeon_ids]
    from .domain import Instance
    reduced = Instance(inst.horizon, rooms, surgeons, inst.n_specialties,
                       inst.patients, inst.mss_assignment)
    try:
        text = export_mip(reduced)
    except MipExportError as exc:
        raise UsageError(str(exc)) from exc
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(text, encoding="utf-8")
    _write_manifest(out.parent, "export-mip", {
        "week": str(args.week), "day": args.day, "out": out.name,
        "patients": len(reduced.patients), "rooms": len(rooms),
        "surgeons": len(surgeons),
    })
    print(f"wrote {out} ({len(reduced.patients)} patients, {len(rooms)} rooms)")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="orsched",
        description="Reactive operating-theatre sequencing toolkit")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="draw a week instance")
    g.add_argument("--params", help="GenParams JSON file (defaults built in)")
    g.add_argument("--seed", type=int, default=None)
    g.add_argument("--out", required=True, help="output directory")
    g.set_defaults(func=cmd_generate)

    s = sub.add_parser("simulate", help="run reactive week simulations")
    s.add_argument("--week", required=True, help="week instance JSON")
    s.add_argument("--policy", help="reaction policy JSON (default: tuned table)")
    s.add_argument("--strategy", default="all",
                   choices=list(STRATEGY_NAMES) + ["all"])
    s.add_argument("--replications", type=int, default=1)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--check", action="store_true",
                   help="feasibility-check after every update")
    s.add_argument("--no-gantt", dest="gantt", action="store_false",
                   help="skip Gantt SVG rendering")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_simulate, gantt=True)

    t = sub.add_parser("tune", help="tune reaction probabilities")
    t.add_argument("--week", help="calibration week JSON")
    t.add_argument("--params", help="GenParams JSON (fresh week per run)")
    t.add_argument("--strategy", required=True, choices=list(STRATEGY_NAMES))
    t.add_argument("--runs", type=int, default=10)
    t.add_argument("--iterations", type=int, default=100)
    t.add_argument("--scale", type=float, default=0.2)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--out", required=True)
    t.set_defaults(func=cmd_tune)

    e = sub.add_parser("export-mip", help="export one day as LP-format text")
    e.add_argument("--week", required=True)
    e.add_argument("--day", type=int, required=True)
    e.add_argument("--out", required=True, help="output .lp file")
    e.set_defaults(func=cmd_export_mip)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except PolicyError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception:
        traceback.print_exc()
        return 1


if __name__ == "__main__":
    sys.exit(main())
