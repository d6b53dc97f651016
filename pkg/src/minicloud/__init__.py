"""Deterministic cloud simulator, deployment strategies, and scaling benchmarks."""

from .cluster_spec import (ClusterSpec, FlavorRef, NodeSpec, SpecDiff,
                           default_benchmark_spec, diff_spec, parse_spec,
                           render_spec)
from .deployer import (DeploymentReport, StrategyParams, apply, destroy,
                       run_scaling_benchmark)
from .edgenet import DnsZone, RouteTable, resolve, route, update_records
from .orchestrator import ClusterState, build_cluster, install_package, schedule
from .simcloud import CloudState, ProviderProfile, builtin_profiles, get_profile
from .workloads import RunPlan, ToolProfile, run, speedup_series, wse_series

__version__ = "0.1.0"

__all__ = [
    "ClusterSpec", "FlavorRef", "NodeSpec", "SpecDiff",
    "default_benchmark_spec", "diff_spec", "parse_spec", "render_spec",
    "DeploymentReport", "StrategyParams", "apply", "destroy",
    "run_scaling_benchmark",
    "DnsZone", "RouteTable", "resolve", "route", "update_records",
    "ClusterState", "build_cluster", "install_package", "schedule",
    "CloudState", "ProviderProfile", "builtin_profiles", "get_profile",
    "RunPlan", "ToolProfile", "run", "speedup_series", "wse_series",
    "__version__",
]
