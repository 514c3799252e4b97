"""Command-line driver: single runs, parameter sweeps, planner validation,
trace generation and WCET profiling.

Every subcommand accepts ``--config FILE`` with ``key = value`` lines whose
keys are the long option names (``du = 0.08``, ``drop-mode = mandatory``).
Flags given on the command line win over the file.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import random
import statistics
import sys
from dataclasses import asdict
from pathlib import Path
from typing import Optional, Sequence

from . import __version__
from .oracle import brute_force, random_rows
from .planner import build_table, choose_delta, extract_plan, plan_is_feasible
from .simulator import POLICY_NAMES, Policy, SimConfig, run
from .workload import (
    TraceFormatError,
    WorkloadSpec,
    generate,
    load_samples,
    load_trace,
    profile_wcet,
    synth_library,
)

log = logging.getLogger("anytime_sched")

SIMULATE_COLUMNS = (
    "policy", "seed", "k", "dl", "du", "delta", "epsilon", "drop_mode", "jobs",
    "accuracy", "accuracy_served", "miss_rate", "mean_depth", "mean_confidence",
    "overhead_fraction",
)
SWEEP_COLUMNS = (
    "axis", "value", "policy", "reps",
    "accuracy_mean", "accuracy_sd", "miss_rate_mean", "miss_rate_sd",
    "mean_depth", "overhead_fraction",
)
SWEEP_AXES = {"k": int, "du": float, "dl": float, "delta": float}


class CliError(Exception):
    pass


def read_config(path: str) -> dict[str, str]:
    out = {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise CliError(f"cannot read config {path}: {exc}") from exc
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise CliError(f"{path}:{lineno}: expected 'key = value'")
        out[key.strip().replace("-", "_")] = value.strip()
    return out


def _apply_config(parser: argparse.ArgumentParser, values: dict[str, str]) -> None:
    actions = {a.dest: a for a in parser._actions}
    defaults = {}
    for key, raw in values.items():
        action = actions.get(key)
        if action is None or key in ("help", "config", "command"):
            raise CliError(f"unknown config key {key!r}")
        value = action.type(raw) if action.type else raw
        if action.choices is not None and value not in action.choices:
            raise CliError(f"config key {key!r}: {raw!r} not in {sorted(action.choices)}")
        defaults[key] = value
    parser.set_defaults(**defaults)


def _float_list(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad number list {text!r}") from exc


def _add_workload_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--k", type=int, default=20, help="concurrent clients")
    p.add_argument("--dl", type=float, default=0.01, help="min relative deadline (s)")
    p.add_argument("--du", type=float, default=0.3, help="max relative deadline (s)")
    p.add_argument("--count", type=int, default=600, help="requests per run")
    p.add_argument("--mode", choices=("closed", "poisson"), default="closed")
    p.add_argument("--rate", type=float, default=100.0, help="poisson arrivals per second")
    p.add_argument("--think-time", type=float, default=0.0)
    p.add_argument("--trace", help="trace file; a synthetic library is used if omitted")
    p.add_argument("--family", default="saturating", help="synthetic confidence family")
    p.add_argument("--trace-seed", type=int, default=0, help="seed of the synthetic library")
    p.add_argument("--delta", type=float, default=0.1, help="reward quantum")
    p.add_argument("--epsilon", type=float, default=None,
                   help="approximation target; overrides --delta per invocation")
    p.add_argument("--drop-mode", choices=("allow", "mandatory"), default="allow")
    p.add_argument("--mandatory", type=int, default=1, help="mandatory depth per job")
    p.add_argument("--overhead", choices=("none", "modeled", "measured"), default="modeled")
    p.add_argument("--cpu-overhead", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0, help="seed of the first replication")
    p.add_argument("--reps", type=int, default=1, help="replications (seeds seed..seed+reps-1)")
    p.add_argument("--out", default="-", help="CSV path, '-' for stdout")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="anytime-sched",
        description="Depth scheduling for multi-exit inference under deadlines.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run one policy, one CSV row per replication")
    p.add_argument("--config")
    p.add_argument("--policy", choices=POLICY_NAMES, default="planner-exp")
    _add_workload_args(p)

    p = sub.add_parser("sweep", help="sweep one parameter over several policies")
    p.add_argument("--config")
    p.add_argument("--policy", default="planner-exp,edf,lcf,rr",
                   help="comma-separated policy names")
    p.add_argument("--axis", choices=sorted(SWEEP_AXES), default="delta")
    p.add_argument("--values", default="0.02,0.05,0.1,0.2,0.5", help="comma-separated")
    _add_workload_args(p)

    p = sub.add_parser("validate", help="check the planner against exhaustive search")
    p.add_argument("--config")
    p.add_argument("--instances", type=int, default=1000, help="instances per epsilon")
    p.add_argument("--epsilon", type=_float_list, default=[0.1, 0.25, 0.5])
    p.add_argument("--max-tasks", type=int, default=6)
    p.add_argument("--max-stages", type=int, default=4)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("gen-trace", help="write a synthetic trace file")
    p.add_argument("--config")
    p.add_argument("--out", required=True)
    p.add_argument("--stages", type=int, default=3)
    p.add_argument("--classes", type=int, default=10)
    p.add_argument("--records", type=int, default=2000)
    p.add_argument("--family", default="saturating")
    p.add_argument("--wcet", type=_float_list, default=None, help="per-stage seconds")
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("profile", help="per-stage WCET from 'stage,seconds' samples")
    p.add_argument("--config")
    p.add_argument("--samples", required=True)
    p.add_argument("--method", choices=("ci", "percentile"), default="ci")
    return parser


def parse_args(argv: Optional[Sequence[str]] = None) -> argparse.Namespace:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "config", None):
        subparser = parser._subparsers._group_actions[0].choices[args.command]
        _apply_config(subparser, read_config(args.config))
        args = parser.parse_args(argv)
    return args


def _library(args):
    if args.trace:
        return load_trace(args.trace)
    return synth_library(family=args.family, seed=args.trace_seed)


def _check_reps(args) -> None:
    if args.reps < 1:
        raise CliError("--reps must be at least 1")


def _run_one(args, library, policy_name: str, seed: int, **override):
    k = override.get("k", args.k)
    dl = override.get("dl", args.dl)
    du = override.get("du", args.du)
    delta = override.get("delta", args.delta)
    spec = WorkloadSpec(
        k=k, d_lower=dl, d_upper=du, count=args.count, seed=seed, mode=args.mode,
        rate=args.rate, think_time=args.think_time, mandatory=args.mandatory,
    )
    kw = {}
    if policy_name.startswith("planner-"):
        kw = dict(delta=delta, epsilon=args.epsilon,
                  drop_allowed=args.drop_mode == "allow")
    policy = Policy.parse(policy_name, **kw)
    config = SimConfig(cpu_overhead=args.cpu_overhead, overhead=args.overhead, seed=seed)
    return run(generate(spec, library), policy, config)


def _open_out(path: str):
    if path == "-":
        return sys.stdout, False
    try:
        return open(path, "w", newline="", encoding="utf-8"), True
    except OSError as exc:
        raise CliError(f"cannot write {path}: {exc}") from exc


def _write_csv(path: str, columns, rows) -> None:
    # Build everything first so a failure never leaves a partial file.
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=columns, lineterminator="\n")
    w.writeheader()
    for row in rows:
        w.writerow({k: _fmt(row[k]) for k in columns})
    fh, close = _open_out(path)
    try:
        fh.write(buf.getvalue())
    finally:
        if close:
            fh.close()


def _fmt(v):
    if isinstance(v, float):
        return f"{v:.6f}"
    return "" if v is None else v


def _write_manifest(path: str, args, extra: dict) -> None:
    if path == "-":
        return
    params = {k: v for k, v in sorted(vars(args).items()) if k not in ("verbose",)}
    manifest = {"tool": "anytime-sched", "version": __version__, "params": params, **extra}
    Path(path + ".json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n",
                                    encoding="utf-8")


def cmd_simulate(args) -> int:
    _check_reps(args)
    library = _library(args)
    rows = []
    for seed in range(args.seed, args.seed + args.reps):
        rep = _run_one(args, library, args.policy, seed)
        s = rep.summary()
        rows.append({
            "policy": rep.policy, "seed": seed, "k": args.k, "dl": args.dl, "du": args.du,
            "delta": args.delta, "epsilon": args.epsilon, "drop_mode": args.drop_mode,
            "jobs": s["jobs"], "accuracy": s["accuracy"],
            "accuracy_served": s["accuracy_served"], "miss_rate": s["miss_rate"],
            "mean_depth": s["mean_depth"], "mean_confidence": s["mean_confidence"],
            "overhead_fraction": s["overhead_fraction"],
        })
    _write_csv(args.out, SIMULATE_COLUMNS, rows)
    _write_manifest(args.out, args, {"columns": list(SIMULATE_COLUMNS)})
    return 0


def _sd(xs):
    return statistics.stdev(xs) if len(xs) > 1 else 0.0


def cmd_sweep(args) -> int:
    _check_reps(args)
    cast = SWEEP_AXES[args.axis]
    try:
        values = [cast(v) for v in args.values.split(",") if v.strip()]
    except ValueError as exc:
        raise CliError(f"bad --values for axis {args.axis}: {args.values!r}") from exc
    policies = [p.strip() for p in args.policy.split(",") if p.strip()]
    if not values or not policies:
        raise CliError("sweep needs at least one value and one policy")
    for p in policies:
        if p not in POLICY_NAMES:
            raise CliError(f"unknown policy {p!r}; choose from {', '.join(POLICY_NAMES)}")
    library = _library(args)
    rows = []
    for value in values:
        for name in policies:
            reps = [
                _run_one(args, library, name, seed, **{args.axis: value})
                for seed in range(args.seed, args.seed + args.reps)
            ]
            acc = [r.accuracy for r in reps]
            miss = [r.miss_rate for r in reps]
            rows.append({
                "axis": args.axis, "value": value, "policy": name, "reps": len(reps),
                "accuracy_mean": statistics.fmean(acc), "accuracy_sd": _sd(acc),
                "miss_rate_mean": statistics.fmean(miss), "miss_rate_sd": _sd(miss),
                "mean_depth": statistics.fmean(r.mean_depth for r in reps),
                "overhead_fraction": statistics.fmean(
                    r.scheduler_overhead_fraction for r in reps),
            })
            log.info("%s=%s %s acc=%.4f", args.axis, value, name, rows[-1]["accuracy_mean"])
    _write_csv(args.out, SWEEP_COLUMNS, rows)
    _write_manifest(args.out, args, {"columns": list(SWEEP_COLUMNS)})
    return 0


def cmd_validate(args) -> int:
    rng = random.Random(args.seed)
    failures = 0
    for eps in args.epsilon:
        if not 0 < eps < 1:
            raise CliError(f"epsilon {eps} outside (0, 1)")
        worst = 1.0
        for _ in range(args.instances):
            rows = random_rows(rng, args.max_tasks, args.max_stages)
            plan = extract_plan(build_table(rows, choose_delta(eps, rows), 0.0))
            best = brute_force(rows).reward
            ok = plan_is_feasible(rows, plan.depths, 0.0) and (
                plan.predicted_reward >= (1 - eps) * best - 1e-12)
            failures += not ok
            if best > 0:
                worst = min(worst, plan.predicted_reward / best)
        print(f"epsilon={eps}: {args.instances} instances, worst ratio {worst:.4f}")
    print("OK" if failures == 0 else f"FAILED: {failures} instances below bound")
    return 0 if failures == 0 else 1


def cmd_gen_trace(args) -> int:
    kw = {}
    if args.wcet is not None:
        kw["stage_wcet"] = args.wcet
    lib = synth_library(args.stages, args.classes, args.family, args.seed, args.records, **kw)
    try:
        lib.save(args.out)
    except OSError as exc:
        raise CliError(f"cannot write {args.out}: {exc}") from exc
    return 0


def cmd_profile(args) -> int:
    try:
        samples = load_samples(args.samples)
    except OSError as exc:
        raise CliError(f"cannot read {args.samples}: {exc}") from exc
    wcet = profile_wcet(samples, args.method)
    print("stage,wcet")
    for i, w in enumerate(wcet, 1):
        print(f"{i},{w:.9f}")
    return 0


COMMANDS = {
    "simulate": cmd_simulate,
    "sweep": cmd_sweep,
    "validate": cmd_validate,
    "gen-trace": cmd_gen_trace,
    "profile": cmd_profile,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        args = parse_args(argv)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (CliError, TraceFormatError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
