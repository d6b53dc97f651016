"""Calibration oracle: derives default parameters from published endpoints.

Runs before everything else and emits the committed fixture consumed by
the simulator, the deployer, and the workload models. Two parameters are
fitted, each by exact single-parameter inversion against its target (ties
broken toward smaller values); every other number is a free default
chosen only to reproduce qualitative curve shapes and is marked as such
in the fixture's provenance block. Re-running the oracle on the committed
targets reproduces the committed fixture byte for byte.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

from .deployer import StrategyParams, strategy_time
from .errors import ValidationError
from .simcloud import profile_from_dict
from .workloads import RunPlan, ToolProfile, knee_vcpus

ORACLE_VERSION = "1.0"
REFERENCE_PROVIDER = "openstack-sim"
REFERENCE_SCALES = (1, 2, 4, 8)
REFERENCE_TRIALS = 5
# Acceptance gates the per-doubling ratios at 1.25 / 1.7; fitting against
# tighter bounds leaves room for the +-2% trial jitter.
DEC_DOUBLING_BOUND = 1.20
CEN_DOUBLING_BOUND = 1.75


@dataclass(frozen=True)
class CalibrationTarget:
    name: str
    target_value: float
    tolerance: float
    source: str

    def __post_init__(self):
        if self.tolerance <= 0:
            raise ValidationError(f"tolerance must be > 0: {self.name}")


DEFAULT_TARGETS = (
    CalibrationTarget(
        name="strategy_ratio_64",
        target_value=12.0,
        tolerance=4.0,
        source="reference endpoint: centralized vs decentralized deployment "
               "time at 64 non-master nodes",
    ),
    CalibrationTarget(
        name="wse_40",
        target_value=0.83,
        tolerance=0.05,
        source="reference endpoint: weak-scaling efficiency at 40 vCPUs "
               "against a 10-vCPU baseline",
    ),
)

WSE_BASE_VCPUS = 10
WSE_FULL_VCPUS = 40

FREE_SERIALIZE_S = 15.0
FREE_GAMMA = 0.007


def _base_parameters() -> dict:
    """Structural free defaults. Timing values are synthetic; flavor names
    follow the real catalogs of the providers being imitated."""
    providers = {
        "aws-sim": {
            "vm_boot_s": 16.0, "api_call_s": 1.5, "api_parallelism": 32,
            "image_import_s": 150.0, "uplink_bw_mbps": 2000.0,
            "public_ip_quota": 8,
            "boot_knee": {"at_total_vms": 33, "extra_boot_s": 72.0},
            "flavors": {"t2.medium": {"vcpus": 2, "ram_gb": 4.0},
                        "t2.2xlarge": {"vcpus": 8, "ram_gb": 32.0}},
            "default_flavor": "t2.medium",
        },
        "gcp-sim": {
            "vm_boot_s": 18.0, "api_call_s": 1.5, "api_parallelism": 32,
            "image_import_s": 140.0, "uplink_bw_mbps": 2000.0,
            "public_ip_quota": 8,
            "boot_knee": None,
            "flavors": {"n1-standard-2": {"vcpus": 2, "ram_gb": 7.5},
                        "n1-standard-8": {"vcpus": 8, "ram_gb": 30.0}},
            "default_flavor": "n1-standard-2",
        },
        "azure-sim": {
            "vm_boot_s": 30.0, "api_call_s": 2.5, "api_parallelism": 16,
            "image_import_s": 160.0, "uplink_bw_mbps": 1500.0,
            "public_ip_quota": 8,
            "boot_knee": {"at_total_vms": 65, "extra_boot_s": 100.0},
            "flavors": {"Standard_DS2_v2": {"vcpus": 2, "ram_gb": 7.0},
                        "Standard_DS4_v2": {"vcpus": 8, "ram_gb": 28.0}},
            "default_flavor": "Standard_DS2_v2",
        },
        "openstack-sim": {
            "vm_boot_s": 20.0, "api_call_s": 2.0, "api_parallelism": 32,
            "image_import_s": 120.0, "uplink_bw_mbps": 1000.0,
            "public_ip_quota": 4,
            "boot_knee": None,
            "flavors": {"s1.modest": {"vcpus": 2, "ram_gb": 4.0},
                        "s1.capacious": {"vcpus": 8, "ram_gb": 16.0}},
            "default_flavor": "s1.modest",
        },
    }
    selfconfig = {"aws-sim": 64.0, "gcp-sim": 72.0,
                  "azure-sim": 75.0, "openstack-sim": 68.0}
    strategies = {}
    for name in providers:
        strategies[name] = {
            "decentralized": {
                "selfconfig_s": selfconfig[name],
                "parallelism_cap": 64,
                "jitter_eps": 0.02,
            },
            "centralized": {
                "push_rtt_s": 0.1,
                "tasks_per_node": 40,
                "provisioner_serialize_s": FREE_SERIALIZE_S,
                "vanilla_download_mb": 700.0,
                "parallelism_cap": 64,
                "jitter_eps": 0.02,
            },
        }
    workloads = {
        "gamma_per_vcpu": FREE_GAMMA,
        "per_storage_bw_mbps": 500.0,
        "tools": {
            "batman-like": {"cpu_seconds_per_unit": 2.0,
                            "io_bytes_per_unit": 50_000.0,
                            "fixed_overhead_s": 1.0},
            "ffm-like": {"cpu_seconds_per_unit": 1.0,
                         "io_bytes_per_unit": 150_000.0,
                         "fixed_overhead_s": 0.5},
            "csi-like": {"cpu_seconds_per_unit": 1.0,
                         "io_bytes_per_unit": 187_500.0,
                         "fixed_overhead_s": 0.5},
        },
    }
    return {"providers": providers, "strategies": strategies,
            "workloads": workloads}


def _params(strategies: dict, provider: str, kind: str) -> StrategyParams:
    return StrategyParams(kind=kind, **strategies[provider][kind])


def _mean_dec_time(n_vms: int, profile, params) -> float:
    """Benchmark-protocol mean: the first of the repeated trials imports."""
    return strategy_time(n_vms, profile, params) \
        + profile.image_import_s / REFERENCE_TRIALS


def _solve_gamma(target: CalibrationTarget) -> float:
    """Invert WSE(N) = 1 / (1 + gamma * (N - base)) at the full width."""
    value = target.target_value
    if not 0 < value <= 1:
        raise ValidationError(
            f"infeasible target set: wse_40={value} not in (0, 1]")
    return (1.0 / value - 1.0) / (WSE_FULL_VCPUS - WSE_BASE_VCPUS)


def _solve_serialize(base: dict, target: CalibrationTarget) -> float:
    """Invert the centralized/decentralized ratio at the largest scale."""
    profile = profile_from_dict(REFERENCE_PROVIDER,
                                base["providers"][REFERENCE_PROVIDER])
    dec = _params(base["strategies"], REFERENCE_PROVIDER, "decentralized")
    cen_entry = dict(base["strategies"][REFERENCE_PROVIDER]["centralized"])
    cen_entry["provisioner_serialize_s"] = 0.0
    cen_zero = StrategyParams(kind="centralized", **cen_entry)

    n_vms = 8 * max(REFERENCE_SCALES) + 1
    mean_dec = _mean_dec_time(n_vms, profile, dec)
    fixed = strategy_time(n_vms, profile, cen_zero)
    serialize = (target.target_value * mean_dec - fixed) / n_vms
    if serialize < 0:
        raise ValidationError(
            f"infeasible target set: ratio {target.target_value} needs "
            f"negative per-node cost")
    return serialize


def _reference_knee(workloads: dict) -> dict:
    tool_entry = workloads["tools"]["csi-like"]
    tool = ToolProfile("csi-like", tool_entry["cpu_seconds_per_unit"],
                       tool_entry["io_bytes_per_unit"],
                       tool_entry["fixed_overhead_s"])
    plan = RunPlan(tool=tool, data_units=1000.0, partitions=1, mode="strong",
                   storage_nodes_used=3,
                   per_storage_bw_mbps=workloads["per_storage_bw_mbps"],
                   gamma=0.0)
    return {"tool": "csi-like", "data_units": 1000.0, "storage_nodes": 3,
            "knee_vcpus": knee_vcpus(plan)}


def _check_shape_constraints(base: dict) -> list[str]:
    """Reject parameter sets that cannot meet the acceptance ratios."""
    checked = []
    profile = profile_from_dict(REFERENCE_PROVIDER,
                                base["providers"][REFERENCE_PROVIDER])
    dec = _params(base["strategies"], REFERENCE_PROVIDER, "decentralized")
    cen = _params(base["strategies"], REFERENCE_PROVIDER, "centralized")
    sizes = [8 * k + 1 for k in REFERENCE_SCALES]

    dec_means = [_mean_dec_time(n, profile, dec) for n in sizes]
    for small, big in zip(dec_means, dec_means[1:]):
        ratio = big / small
        if ratio > DEC_DOUBLING_BOUND:
            raise ValidationError(
                f"infeasible target set: decentralized doubling ratio {ratio:.3f} "
                f"exceeds {DEC_DOUBLING_BOUND}")
    checked.append(f"decentralized doubling ratios <= {DEC_DOUBLING_BOUND}")

    cen_times = [strategy_time(n, profile, cen) for n in sizes]
    for small, big in zip(cen_times, cen_times[1:]):
        ratio = big / small
        if ratio < CEN_DOUBLING_BOUND:
            raise ValidationError(
                f"infeasible target set: centralized doubling ratio {ratio:.3f} "
                f"below {CEN_DOUBLING_BOUND}")
    checked.append(f"centralized doubling ratios >= {CEN_DOUBLING_BOUND}")

    previous_gap = None
    for n in range(9, sizes[-1] + 1):
        gap = strategy_time(n, profile, cen) - strategy_time(n, profile, dec)
        if gap <= 0 or (previous_gap is not None and gap <= previous_gap):
            raise ValidationError(
                "infeasible target set: strategy separation not increasing")
        previous_gap = gap
    checked.append("centralized > decentralized with strictly growing gap")
    return checked


def calibrate(targets: Sequence[CalibrationTarget] = DEFAULT_TARGETS) -> dict:
    """Fit against the targets and return the complete fixture mapping.

    Raises if a target is unknown, a fit is infeasible, or a plug-back
    residual exceeds its tolerance.
    """
    base = _base_parameters()
    fitted: list[str] = []
    residuals: dict[str, float] = {}
    by_name = {t.name: t for t in targets}
    unknown = set(by_name) - {"strategy_ratio_64", "wse_40"}
    if unknown:
        raise ValidationError(f"unknown calibration targets: {sorted(unknown)}")

    if "wse_40" in by_name:
        target = by_name["wse_40"]
        gamma = _solve_gamma(target)
        base["workloads"]["gamma_per_vcpu"] = gamma
        fitted.append("workloads.gamma_per_vcpu")
        achieved = 1.0 / (1.0 + gamma * (WSE_FULL_VCPUS - WSE_BASE_VCPUS))
        residuals[target.name] = achieved - target.target_value

    if "strategy_ratio_64" in by_name:
        target = by_name["strategy_ratio_64"]
        serialize = _solve_serialize(base, target)
        for provider in base["strategies"]:
            base["strategies"][provider]["centralized"]["provisioner_serialize_s"] = serialize
        fitted.append(
            f"strategies.{REFERENCE_PROVIDER}.centralized.provisioner_serialize_s")
        profile = profile_from_dict(REFERENCE_PROVIDER,
                                    base["providers"][REFERENCE_PROVIDER])
        n_vms = 8 * max(REFERENCE_SCALES) + 1
        achieved = strategy_time(
            n_vms, profile,
            _params(base["strategies"], REFERENCE_PROVIDER, "centralized"))
        achieved /= _mean_dec_time(
            n_vms, profile,
            _params(base["strategies"], REFERENCE_PROVIDER, "decentralized"))
        residuals[target.name] = achieved - target.target_value

    for target in targets:
        residual = residuals[target.name]
        if abs(residual) > target.tolerance:
            raise ValidationError(
                f"infeasible target set: residual {residual} for {target.name} "
                f"exceeds tolerance {target.tolerance}")

    constraints = _check_shape_constraints(base)
    base["workloads"]["reference_knee"] = _reference_knee(base["workloads"])

    base["provenance"] = {
        "oracle_version": ORACLE_VERSION,
        "targets": [{"name": t.name, "target_value": t.target_value,
                     "tolerance": t.tolerance, "source": t.source}
                    for t in targets],
        "residuals": residuals,
        "fitted": fitted,
        "free_defaults": "every parameter not listed under 'fitted' is a free "
                         "default chosen for qualitative curve shapes",
        "solver": "exact single-parameter inversion per target, verified by "
                  "plugging back; ties broken toward smaller values",
        "search_ranges": {
            "workloads.gamma_per_vcpu": [0.0, 0.02],
            "provisioner_serialize_s": [0.0, 60.0],
        },
        "reference_protocol": {
            "provider": REFERENCE_PROVIDER,
            "scales": list(REFERENCE_SCALES),
            "trials": REFERENCE_TRIALS,
        },
        "constraints_checked": constraints,
    }
    return base


def render_fixture(fixture_data: dict) -> str:
    return json.dumps(fixture_data, indent=2, sort_keys=True) + "\n"


def default_fixture_path() -> Path:
    return Path(__file__).resolve().parent / "data" / "calibration.json"


def write_fixture(path: Optional[Path] = None,
                  targets: Sequence[CalibrationTarget] = DEFAULT_TARGETS) -> Path:
    """Run the oracle and write the fixture file."""
    path = Path(path) if path else default_fixture_path()
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(render_fixture(calibrate(targets)), encoding="utf-8")
    return path


def committed_matches_regenerated() -> bool:
    """True when re-running the oracle reproduces the committed bytes."""
    from . import fixture as fixture_module

    return fixture_module.fixture_bytes() == render_fixture(calibrate()).encode("utf-8")
