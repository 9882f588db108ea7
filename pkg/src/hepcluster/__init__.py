"""Declarative provisioning and convergence engine for a small HEP compute cluster."""

from .model import (
    ClusterSpec,
    NodeSpec,
    StorageSpec,
    UserSpec,
    AppSpec,
    MotdSpec,
    PartitionTable,
    Role,
    parse_spec,
    serialize_spec,
    spec_hash,
    validate,
    partition_plan,
)
from .planner import Action, Plan, FleetState, diff, observe, power_sequence
from .executor import ExecutionReport, apply, run_power
from .simfleet import SimFleet
from .monitor import compute_rates, health_check, render_summary

__version__ = "0.1.0"

__all__ = [
    "ClusterSpec", "NodeSpec", "StorageSpec", "UserSpec", "AppSpec",
    "MotdSpec", "PartitionTable", "Role",
    "parse_spec", "serialize_spec", "spec_hash", "validate", "partition_plan",
    "Action", "Plan", "FleetState", "diff", "observe", "power_sequence",
    "ExecutionReport", "apply", "run_power",
    "SimFleet",
    "compute_rates", "health_check", "render_summary",
]
