"""Plan execution through a pluggable backend, phase by phase."""

from __future__ import annotations

import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Protocol

from .model import ClusterSpec, spec_hash
from .planner import PHASES, Action, Plan, diff, observe

DEFAULT_MAX_PARALLEL = 4


class BackendError(Exception):
    """A backend capability failed."""


class NodeUnreachableError(BackendError):
    """Target node cannot be reached (powered off, crashed, or isolated)."""


class TransportError(BackendError):
    """The transport itself failed, independent of node power state."""


class Backend(Protocol):
    """Capability contract shared by the simulated fleet and real transports.

    Every capability is idempotent and returns True when it changed
    state, False when the requested state already held.
    """

    def hostnames(self) -> list[str]: ...
    def read_state(self, node: str) -> dict: ...
    def power(self, node: str, on: bool) -> bool: ...
    def write_file(self, node: str, path: str, data: bytes) -> bool: ...
    def append_file(self, node: str, path: str, data: bytes) -> bool: ...
    def mount(self, node: str, source: str, mountpoint: str) -> bool: ...
    def create_user(self, node: str, username: str, group: str,
                    shell: str, home: str) -> bool: ...
    def enable_quota(self, node: str) -> bool: ...
    def set_quota(self, node: str, username: str, soft: int, hard: int) -> bool: ...
    def set_marker(self, node: str, marker: str) -> bool: ...
    def enable_monitor(self, node: str) -> bool: ...


@dataclass
class ActionResult:
    action_id: str
    status: str  # applied | already_satisfied | failed | would_apply | skipped
    error: str = ""
    seconds: float = 0.0


@dataclass
class ExecutionReport:
    results: list[ActionResult] = field(default_factory=list)
    status: str = "converged"  # converged | partial | aborted

    def counts(self) -> dict[str, int]:
        out: dict[str, int] = {}
        for r in self.results:
            out[r.status] = out.get(r.status, 0) + 1
        return out

    def to_dict(self) -> dict:
        # wall times excluded: report serialization stays byte-stable
        return {
            "status": self.status,
            "results": [{"action_id": r.action_id, "status": r.status,
                         **({"error": r.error} if r.error else {})}
                        for r in self.results],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"


def _dispatch(action: Action, backend: Backend) -> bool:
    """Run one action through the backend; returns True if state changed."""
    p = action.payload
    node = action.target
    kind = action.kind
    if kind == "PowerOn":
        return backend.power(node, True)
    if kind == "PowerOff":
        return backend.power(node, False)
    if kind == "LayoutStorage":
        return backend.set_marker(node, "raid")
    if kind == "InstallBase":
        return backend.set_marker(node, "base-os")
    if kind == "WriteFile":
        return backend.write_file(node, p["path"], p["content"].encode("utf-8"))
    if kind == "AppendFile":
        return backend.append_file(node, p["path"], p["content"].encode("utf-8"))
    if kind == "Mount":
        return backend.mount(node, p["source"], p["mountpoint"])
    if kind == "PersistMount":
        return backend.append_file(node, p["path"], p["line"].encode("utf-8"))
    if kind == "CreateUser":
        return backend.create_user(node, p["username"], p["group"],
                                   p["shell"], p["home"])
    if kind == "SyncAccounts":
        changed = False
        for username, (group, shell, home) in sorted(p["accounts"].items()):
            changed |= backend.create_user(node, username, group, shell, home)
        return changed
    if kind == "EnableQuota":
        return backend.enable_quota(node)
    if kind == "SetQuota":
        return backend.set_quota(node, p["username"], p["soft_bytes"],
                                 p["hard_bytes"])
    if kind == "InstallApp":
        return backend.set_marker(node, f"app:{p['name']}")
    if kind == "EnableMonitor":
        return backend.enable_monitor(node)
    raise ValueError(f"unknown action kind {kind!r}")


def _run_action(action: Action, backend: Backend) -> ActionResult:
    start = time.monotonic()
    try:
        changed = _dispatch(action, backend)
    except BackendError as exc:
        return ActionResult(action.id, "failed", error=str(exc),
                            seconds=time.monotonic() - start)
    status = "applied" if changed else "already_satisfied"
    return ActionResult(action.id, status, seconds=time.monotonic() - start)


def apply(plan: Plan, backend: Backend, spec: ClusterSpec, *,
          dry_run: bool = False,
          max_parallel_nodes: int = DEFAULT_MAX_PARALLEL) -> ExecutionReport:
    """Apply a plan phase by phase; nodes within a phase run concurrently."""
    report = ExecutionReport()
    if plan.spec_hash != spec_hash(spec):
        report.status = "aborted"
        return report

    if dry_run:
        report.results = [ActionResult(a.id, "would_apply") for a in plan.actions]
        report.status = "converged" if not plan.actions else "partial"
        return report

    by_phase: dict[str, list[Action]] = {}
    for action in plan.actions:
        by_phase.setdefault(action.phase, []).append(action)

    failed = False
    for phase in PHASES:
        actions = by_phase.get(phase, [])
        if not actions:
            continue
        if failed:
            report.results += [ActionResult(a.id, "skipped") for a in actions]
            continue
        per_node: dict[str, list[Action]] = {}
        for action in actions:
            per_node.setdefault(action.target, []).append(action)

        def run_node(node_actions: list[Action]) -> list[ActionResult]:
            results = []
            for action in node_actions:
                result = _run_action(action, backend)
                results.append(result)
                if result.status == "failed":
                    results += [ActionResult(a.id, "skipped") for a in
                                node_actions[len(results):]]
                    break
            return results

        with ThreadPoolExecutor(max_workers=max_parallel_nodes) as pool:
            futures = {node: pool.submit(run_node, acts)
                       for node, acts in sorted(per_node.items())}
        node_results = {node: f.result() for node, f in futures.items()}
        # report in plan order regardless of completion order
        indexed = {r.action_id: r for results in node_results.values()
                   for r in results}
        report.results += [indexed[a.id] for a in actions]
        if any(r.status == "failed" for r in indexed.values()):
            failed = True

    if failed:
        report.status = "partial"
    else:
        post = diff(spec, observe(backend))
        report.status = "converged" if not post.actions else "partial"
    return report


def run_power(sequence: list[Action], backend: Backend) -> ExecutionReport:
    """Execute a power sequence strictly serially, stopping at first failure."""
    report = ExecutionReport()
    for i, action in enumerate(sequence):
        if action.target == "infrastructure":
            # network gear and UPS are not controllable targets
            report.results.append(ActionResult(action.id, "already_satisfied"))
            continue
        result = _run_action(action, backend)
        report.results.append(result)
        if result.status == "failed":
            report.results += [ActionResult(a.id, "skipped")
                               for a in sequence[i + 1:]]
            report.status = "partial"
            return report
    report.status = "converged"
    return report
