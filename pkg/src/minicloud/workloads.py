"""Synthetic data-parallel workloads: strong and weak scaling on a cluster.

A run splits `data_units` into N partitions, one per vCPU, and assigns
each partition to a containerized tool replica. Per-replica time is
overhead + compute + I/O, where the storage fabric's aggregate bandwidth
(storage nodes times per-node bandwidth) is shared equally among the
concurrent readers. In strong mode the dataset is fixed, so the shared
I/O term is independent of N. In weak mode the dataset grows
proportionally to N, partitions stay constant-sized, the I/O share is
taken at the baseline width, and a contention factor 1 + gamma*(N - base)
carries the efficiency loss.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass
from typing import Optional

from . import fixture, orchestrator
from .errors import OrchestratorError, ValidationError
from .orchestrator import ClusterState

MODES = ("strong", "weak")
LINEARITY_BAND = 0.9  # "within 10% of linear"
RESULTS_CSV_HEADER = "tool,mode,vcpus,t_seconds,speedup,wse"


@dataclass(frozen=True)
class ToolProfile:
    """Synthetic cost model for one containerized tool."""

    name: str
    cpu_seconds_per_unit: float
    io_bytes_per_unit: float
    fixed_overhead_s: float

    def __post_init__(self):
        for attr in ("cpu_seconds_per_unit", "io_bytes_per_unit", "fixed_overhead_s"):
            if getattr(self, attr) < 0:
                raise ValidationError(f"{attr} must be >= 0: {self.name}")


def builtin_tools() -> dict[str, ToolProfile]:
    tools = fixture.workloads_entry()["tools"]
    return {name: ToolProfile(name, t["cpu_seconds_per_unit"],
                              t["io_bytes_per_unit"], t["fixed_overhead_s"])
            for name, t in tools.items()}


def get_tool(name: str) -> ToolProfile:
    tools = builtin_tools()
    if name not in tools:
        raise ValidationError(f"unknown tool profile {name!r} (known: {', '.join(sorted(tools))})")
    return tools[name]


def default_gamma() -> float:
    return fixture.workloads_entry()["gamma_per_vcpu"]


def default_storage_bw_mbps() -> float:
    return fixture.workloads_entry()["per_storage_bw_mbps"]


@dataclass(frozen=True)
class RunPlan:
    """One parallel run: a tool over data_units split into `partitions`."""

    tool: ToolProfile
    data_units: float
    partitions: int
    mode: str = "strong"
    storage_nodes_used: int = 1
    per_storage_bw_mbps: float = 500.0
    baseline_partitions: Optional[int] = None
    gamma: Optional[float] = None

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValidationError(f"unknown mode: {self.mode}")
        if self.partitions < 1:
            raise ValidationError("partitions must be a positive integer")
        if self.data_units <= 0:
            raise ValidationError("data_units must be positive")
        if self.storage_nodes_used < 0:
            raise ValidationError("storage_nodes_used must be >= 0")
        if self.storage_nodes_used == 0 and self.tool.io_bytes_per_unit > 0:
            raise ValidationError(
                "zero storage nodes with io_bytes_per_unit > 0: nothing to read from")


@dataclass
class ScalingResult:
    vcpus: int
    t_seconds: float
    speedup: Optional[float] = None
    wse: Optional[float] = None


def _aggregate_bw_bytes(plan: RunPlan) -> float:
    return plan.storage_nodes_used * plan.per_storage_bw_mbps * 1e6 / 8.0


def _contention_factor(plan: RunPlan) -> float:
    if plan.mode != "weak":
        return 1.0
    base = plan.baseline_partitions or plan.partitions
    if plan.partitions <= base:
        return 1.0
    gamma = default_gamma() if plan.gamma is None else plan.gamma
    return 1.0 + gamma * (plan.partitions - base)


def model_time(plan: RunPlan) -> float:
    """Closed-form run time for the plan.

    Replicas are homogeneous, so the slowest replica equals every
    replica: overhead + per-partition compute + shared-bandwidth read.
    """
    tool = plan.tool
    per_replica_units = plan.data_units / plan.partitions
    compute = per_replica_units * tool.cpu_seconds_per_unit
    io = 0.0
    if tool.io_bytes_per_unit > 0:
        aggregate = _aggregate_bw_bytes(plan)
        readers = (plan.baseline_partitions or plan.partitions) \
            if plan.mode == "weak" else plan.partitions
        io = per_replica_units * tool.io_bytes_per_unit * readers / aggregate
    return (tool.fixed_overhead_s + compute + io) * _contention_factor(plan)


def _check_cluster(plan: RunPlan, cluster: ClusterState):
    free = cluster.schedulable_vcpus()
    if free < plan.partitions:
        raise OrchestratorError(
            f"capacity shortfall: need {plan.partitions} schedulable vcpus, have {free:g}")
    storage = cluster.storage_node_count()
    if plan.storage_nodes_used > storage:
        raise ValidationError(
            f"storage_nodes_used={plan.storage_nodes_used} exceeds deployed "
            f"storage nodes ({storage})")


def run(plan: RunPlan, cluster: ClusterState) -> ScalingResult:
    """Evaluate the plan against a cluster snapshot."""
    _check_cluster(plan, cluster)
    return ScalingResult(vcpus=plan.partitions, t_seconds=model_time(plan))


def simulate_run(plan: RunPlan, cluster: ClusterState) -> float:
    """Independent oracle: explicit per-replica simulation.

    Schedules one short-lived replica per partition through the
    orchestrator, then steps replica progress through compute and a
    shared-bandwidth read phase, re-splitting bandwidth whenever a reader
    finishes. Used to cross-check model_time for small N.
    """
    _check_cluster(plan, cluster)
    scratch = copy.deepcopy(cluster)
    replicas = []
    for _ in range(plan.partitions):
        container = orchestrator.add_container(
            scratch, image=plan.tool.name, vcpus=1, kind="short_lived",
            replica_group="scaling-run")
        if container.state != "running":
            raise OrchestratorError("oracle could not place every replica")
        replicas.append(container.id)

    per_replica_units = plan.data_units / plan.partitions
    compute_done = plan.tool.fixed_overhead_s + \
        per_replica_units * plan.tool.cpu_seconds_per_unit
    bytes_left = {cid: per_replica_units * plan.tool.io_bytes_per_unit
                  for cid in replicas}
    finish = dict.fromkeys(replicas, compute_done)

    if plan.tool.io_bytes_per_unit > 0:
        aggregate = _aggregate_bw_bytes(plan)
        if plan.mode == "weak" and plan.baseline_partitions:
            # Weak runs read at the baseline share; growth beyond the
            # baseline is carried by the contention factor instead.
            share = aggregate / plan.baseline_partitions
            for cid in replicas:
                finish[cid] = compute_done + bytes_left[cid] / share
        else:
            clock = compute_done
            active = set(replicas)
            while active:
                share = aggregate / len(active)
                first = min(active, key=lambda cid: (bytes_left[cid], cid))
                dt = bytes_left[first] / share
                clock += dt
                done = set()
                for cid in active:
                    bytes_left[cid] -= share * dt
                    if bytes_left[cid] <= 1e-9:
                        finish[cid] = clock
                        done.add(cid)
                active -= done

    for cid in replicas:
        orchestrator.complete_container(scratch, cid, "succeeded")
    return max(finish.values()) * _contention_factor(plan)


def speedup_series(plan: RunPlan, cluster: ClusterState,
                   vcpu_list: list[int]) -> list[ScalingResult]:
    """Strong-scaling sweep; speedup reported as T_1 / T_N."""
    t1 = model_time(_with_partitions(plan, 1, "strong"))
    results = []
    for n in sorted(vcpu_list):
        result = run(_with_partitions(plan, n, "strong"), cluster)
        result.speedup = t1 / result.t_seconds
        results.append(result)
    return results


def wse_series(plan: RunPlan, cluster: ClusterState, vcpu_list: list[int],
               n_base: int) -> list[ScalingResult]:
    """Weak-scaling sweep; WSE(N) = T_base / T_N with data scaled by N/base."""
    if n_base not in vcpu_list:
        raise ValidationError(f"baseline {n_base} must be in the vcpu list")
    base_plan = _weak_plan(plan, n_base, n_base)
    t_base = model_time(base_plan)
    results = []
    for n in sorted(vcpu_list):
        result = run(_weak_plan(plan, n, n_base), cluster)
        result.wse = t_base / result.t_seconds
        results.append(result)
    return results


def _with_partitions(plan: RunPlan, n: int, mode: str) -> RunPlan:
    return RunPlan(
        tool=plan.tool, data_units=plan.data_units, partitions=n, mode=mode,
        storage_nodes_used=plan.storage_nodes_used,
        per_storage_bw_mbps=plan.per_storage_bw_mbps,
        baseline_partitions=plan.baseline_partitions, gamma=plan.gamma)


def _weak_plan(plan: RunPlan, n: int, n_base: int) -> RunPlan:
    # Weak mode: data grows with N so each replica keeps a constant share.
    return RunPlan(
        tool=plan.tool, data_units=plan.data_units * n / n_base, partitions=n,
        mode="weak", storage_nodes_used=plan.storage_nodes_used,
        per_storage_bw_mbps=plan.per_storage_bw_mbps,
        baseline_partitions=n_base, gamma=plan.gamma)


def knee_vcpus(plan: RunPlan, limit: int = 4096) -> int:
    """Largest N whose speedup stays within 10% of linear.

    Scans outward from 1; beyond the returned N the model is strictly
    below the 0.9*N band (the speedup/N ratio decreases monotonically).
    """
    t1 = model_time(_with_partitions(plan, 1, "strong"))
    knee = 1
    for n in range(1, limit + 1):
        tn = model_time(_with_partitions(plan, n, "strong"))
        if t1 / tn >= LINEARITY_BAND * n:
            knee = n
        else:
            break
    return knee


def results_csv(results: list[ScalingResult], tool: str, mode: str) -> str:
    lines = [RESULTS_CSV_HEADER]
    for r in results:
        speedup = f"{r.speedup:.6f}" if r.speedup is not None else ""
        wse = f"{r.wse:.6f}" if r.wse is not None else ""
        lines.append(f"{tool},{mode},{r.vcpus},{r.t_seconds:.6f},{speedup},{wse}")
    return "\n".join(lines) + "\n"
