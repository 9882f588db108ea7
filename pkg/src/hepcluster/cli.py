"""Command-line entry point: validate, gen, plan, apply, status, power, monitor."""

from __future__ import annotations

import argparse
import contextlib
import fcntl
import os
import sys

from . import configgen, executor, monitor, planner
from .model import ClusterSpec, SpecError, parse_spec, validate
from .simfleet import SimFleet

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_FAILURE = 2
EXIT_TRANSPORT = 3
EXIT_USAGE = 4

GEN_ARTIFACTS = ("exports", "fstab", "env", "aliases", "motd", "users", "quotas")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="hepcluster",
                     description="Converge a master/worker compute cluster "
                                 "to a declarative specification.")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    def add_common(p, state=True):
        p.add_argument("spec", help="path to the cluster spec file")
        if state:
            p.add_argument("--backend", choices=["sim", "shell"], default="sim")
            p.add_argument("--state", help="simulated fleet state file")

    add_common(sub.add_parser("validate", help="check the spec"), state=False)

    p = sub.add_parser("gen", help="print a generated artifact")
    p.add_argument("artifact", choices=GEN_ARTIFACTS)
    p.add_argument("spec")

    p = sub.add_parser("plan", help="diff spec against fleet state")
    add_common(p)
    p.add_argument("--format", choices=["table", "machine"], default="table")

    p = sub.add_parser("apply", help="converge the fleet to the spec")
    add_common(p)
    p.add_argument("--dry-run", action="store_true")
    p.add_argument("--max-parallel", type=int, default=4)
    p.add_argument("--format", choices=["table", "machine"], default="table")

    p = sub.add_parser("status", help="report per-node health")
    add_common(p)
    p.add_argument("--format", choices=["table", "machine"], default="table")

    p = sub.add_parser("power", help="run the start or stop sequence")
    p.add_argument("direction", choices=["on", "off"])
    add_common(p)

    p = sub.add_parser("monitor", help="sample traffic and print rates")
    add_common(p)
    p.add_argument("--interval", type=float, default=2.0)
    p.add_argument("--rate", type=float, default=1000.0,
                   help="simulated traffic rate in bytes/second")
    p.add_argument("--format", choices=["table", "machine"], default="table")
    return parser


def _load_spec(path: str) -> ClusterSpec:
    with open(path, "rb") as f:
        return parse_spec(f.read())


def _load_fleet(args, spec: ClusterSpec) -> SimFleet:
    if args.backend == "shell":
        raise executor.TransportError(
            "shell backend is a contract only; no transport is configured")
    if not args.state:
        raise UsageError("sim backend requires --state")
    if os.path.exists(args.state):
        return SimFleet.load(args.state, spec)
    return SimFleet(spec)


@contextlib.contextmanager
def _state_lock(path: str):
    """Advisory lock guarding mutating subcommands; busy lock fails fast."""
    lock_path = path + ".lock"
    with open(lock_path, "w") as f:
        try:
            fcntl.flock(f, fcntl.LOCK_EX | fcntl.LOCK_NB)
        except OSError:
            raise executor.TransportError(
                f"state file {path} is locked by another invocation") from None
        try:
            yield
        finally:
            fcntl.flock(f, fcntl.LOCK_UN)


def _validate_or_fail(spec: ClusterSpec, out) -> bool:
    violations = validate(spec)
    for v in violations:
        print(f"violation [{v.code}] {v.message}", file=out)
    return not violations


def _cmd_validate(args, out) -> int:
    spec = _load_spec(args.spec)
    if not _validate_or_fail(spec, out):
        return EXIT_VALIDATION
    print(f"spec OK: {len(spec.nodes)} nodes, {len(spec.users)} users", file=out)
    return EXIT_OK


def _cmd_gen(args, out) -> int:
    spec = _load_spec(args.spec)
    name = args.artifact
    if name == "exports":
        text = configgen.gen_exports(
            spec.storage, [w.hostname for w in spec.workers]).text
    elif name == "fstab":
        master_ip = spec.master.internal_ip(spec.subnet) or ""
        text = configgen.gen_fstab_mount(
            master_ip, spec.storage.path, spec.worker_mountpoint).text
    elif name == "env":
        text = configgen.gen_env_profile(list(spec.apps), spec.storage.path).text
    elif name == "aliases":
        text = configgen.gen_alias_guards(
            list(spec.alias_guards), spec.motd.worker_range).text
    elif name == "motd":
        text = configgen.gen_motd(spec.motd).text
    elif name == "users":
        text = "\n".join(configgen.gen_users_commands(list(spec.users))) + "\n"
    else:  # quotas
        text = "\n".join(
            configgen.gen_quota_commands(spec.storage, list(spec.users))) + "\n"
    out.write(text)
    return EXIT_OK


def _cmd_plan(args, out) -> int:
    spec = _load_spec(args.spec)
    if not _validate_or_fail(spec, sys.stderr):
        return EXIT_VALIDATION
    fleet = _load_fleet(args, spec)
    plan = planner.diff(spec, planner.observe(fleet))
    if args.format == "machine":
        out.write(plan.to_json())
    else:
        for action in plan.actions:
            print(f"{action.phase}  {action.target:<16}{action.kind}", file=out)
        print(f"{len(plan.actions)} pending action(s)", file=out)
    return EXIT_OK


def _cmd_apply(args, out) -> int:
    spec = _load_spec(args.spec)
    if not _validate_or_fail(spec, sys.stderr):
        return EXIT_VALIDATION
    fleet = _load_fleet(args, spec)
    plan = planner.diff(spec, planner.observe(fleet))
    with _state_lock(args.state):
        report = executor.apply(plan, fleet, spec, dry_run=args.dry_run,
                                max_parallel_nodes=args.max_parallel)
        if not args.dry_run:
            fleet.save(args.state)
    _print_report(report, args.format, out)
    if args.dry_run:
        return EXIT_OK
    return EXIT_OK if report.status == "converged" else EXIT_FAILURE


def _print_report(report: executor.ExecutionReport, fmt: str, out) -> None:
    if fmt == "machine":
        out.write(report.to_json())
        return
    for r in report.results:
        print(f"{r.status:<18}{r.action_id}"
              + (f"  ({r.error})" if r.error else ""), file=out)
    counts = " ".join(f"{k}={v}" for k, v in sorted(report.counts().items()))
    print(f"plan {report.status}: {counts or 'nothing to do'}", file=out)


def _cmd_status(args, out) -> int:
    spec = _load_spec(args.spec)
    fleet = _load_fleet(args, spec)
    state = planner.observe(fleet)
    health = monitor.health_check(state, spec)
    if args.format == "machine":
        import json
        out.write(json.dumps({"health": health}, indent=2, sort_keys=True) + "\n")
    else:
        for host in sorted(health):
            print(f"{host:<16}{health[host]}", file=out)
    return EXIT_OK


def _cmd_power(args, out) -> int:
    spec = _load_spec(args.spec)
    if not _validate_or_fail(spec, sys.stderr):
        return EXIT_VALIDATION
    fleet = _load_fleet(args, spec)
    direction = "start" if args.direction == "on" else "stop"
    sequence = planner.power_sequence(direction, spec)
    with _state_lock(args.state):
        report = executor.run_power(sequence, fleet)
        fleet.save(args.state)
    for action, result in zip(sequence, report.results):
        print(f"{result.status:<18}{action.kind} {action.target}", file=out)
    return EXIT_OK if report.status == "converged" else EXIT_FAILURE


def _cmd_monitor(args, out) -> int:
    spec = _load_spec(args.spec)
    fleet = _load_fleet(args, spec)
    # two snapshots separated by one simulated interval; state is not saved
    state0 = planner.observe(fleet)
    sample0 = monitor.take_sample(state0, fleet.clock)
    profile = {h: args.rate for h in fleet.hostnames()}
    fleet.sim_tick(args.interval, profile)
    state1 = planner.observe(fleet)
    sample1 = monitor.take_sample(state1, fleet.clock)
    if sample1.timestamp <= sample0.timestamp:
        raise executor.TransportError("monitor interval produced no time window")
    report = monitor.compute_rates(sample0, sample1)
    report.health = monitor.health_check(state1, spec)
    if args.format == "machine":
        out.write(report.to_json())
    else:
        out.write(monitor.render_summary(report))
    return EXIT_OK


_COMMANDS = {
    "validate": _cmd_validate,
    "gen": _cmd_gen,
    "plan": _cmd_plan,
    "apply": _cmd_apply,
    "status": _cmd_status,
    "power": _cmd_power,
    "monitor": _cmd_monitor,
}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        return _COMMANDS[args.subcommand](args, sys.stdout)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SpecError as exc:
        print(f"spec error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except planner.PlanError as exc:
        print(f"planning failed: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    except executor.TransportError as exc:
        print(f"transport error: {exc}", file=sys.stderr)
        return EXIT_TRANSPORT
    except FileNotFoundError as exc:
        print(f"file error: {exc}", file=sys.stderr)
        return EXIT_TRANSPORT


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
