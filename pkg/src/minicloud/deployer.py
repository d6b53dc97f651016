"""Executes plans against the simulated provider under two strategies.

Decentralized provisioning boots preprovisioned images that configure
themselves in parallel at boot, so total time is dominated by one boot
plus one self-configuration regardless of size. Centralized provisioning
boots vanilla images, pulls packages over the shared uplink, and is
configured by a single external coordinator, so per-node costs accumulate
and time grows steeply with the node count.

Per-trial fluctuation is modeled as a seeded multiplicative jitter on the
machine-dependent phases (boot, download, configure); API-metered phases
(create, image import) stay exact so cache and idempotence effects are
bit-reproducible.

apply/destroy mutate one CloudState and must be serialized per instance;
benchmark trials run on independent instances and merge in a fixed order.
"""

from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from . import fixture
from .cluster_spec import (BENCHMARK_SCALES, NodeSpec, SpecDiff,
                           default_benchmark_spec, diff_spec)
from .errors import CloudError, ValidationError
from .simcloud import (PREPROVISIONED, VANILLA, CloudState, ProviderProfile,
                       get_profile)

PHASES = ("create", "image_import", "boot", "download", "configure")
REPORT_CSV_HEADER = ("provider,strategy,nodes_total,trial,seed,deploy_time_s,"
                     "create_s,import_s,boot_s,download_s,configure_s")


@dataclass(frozen=True)
class StrategyParams:
    """Tunable costs of one provisioning strategy."""

    kind: str
    selfconfig_s: float = 0.0
    push_rtt_s: float = 0.0
    tasks_per_node: int = 1
    provisioner_serialize_s: float = 0.0
    parallelism_cap: int = 64
    vanilla_download_mb: float = 0.0
    jitter_eps: float = 0.02

    def __post_init__(self):
        if self.kind not in ("decentralized", "centralized"):
            raise ValidationError(f"unknown strategy: {self.kind}")
        if self.parallelism_cap < 1:
            raise ValidationError("parallelism_cap must be >= 1")
        for attr in ("selfconfig_s", "push_rtt_s", "provisioner_serialize_s",
                     "vanilla_download_mb", "jitter_eps"):
            if getattr(self, attr) < 0:
                raise ValidationError(f"{attr} must be >= 0")


def default_params(provider: str, kind: str) -> StrategyParams:
    entry = fixture.strategy_entry(provider, kind)
    return StrategyParams(kind=kind, **entry)


@dataclass
class DeploymentReport:
    provider: str
    strategy: str
    nodes_total: int
    trial: int
    seed: int
    deploy_time_s: float
    phases: dict[str, float] = field(default_factory=dict)

    def csv_row(self) -> str:
        p = self.phases
        return (f"{self.provider},{self.strategy},{self.nodes_total},"
                f"{self.trial},{self.seed},{self.deploy_time_s:.6f},"
                f"{p['create']:.6f},{p['image_import']:.6f},{p['boot']:.6f},"
                f"{p['download']:.6f},{p['configure']:.6f}")


@dataclass
class TeardownReport:
    released_vms: int
    released_volumes: int
    released_ips: int
    teardown_s: float


def jitter_factor(seed: int, provider: str, strategy: str, nodes_total: int,
                  trial: int, eps: float) -> float:
    """Multiplicative noise in [1-eps, 1+eps], stable across processes."""
    if eps == 0:
        return 1.0
    rng = random.Random(f"{seed}:{provider}:{strategy}:{nodes_total}:{trial}")
    return rng.uniform(1.0 - eps, 1.0 + eps)


# -- closed-form timing models ----------------------------------------------


def effective_parallelism(profile: ProviderProfile, params: StrategyParams) -> int:
    return min(profile.api_parallelism, params.parallelism_cap)


def decentralized_phases(n_vms: int, profile: ProviderProfile,
                         params: StrategyParams, import_needed: bool,
                         jitter: float = 1.0) -> dict[str, float]:
    """Phase durations for a decentralized deployment of n_vms machines.

    Boot and self-configuration overlap across nodes, so the critical path
    is the last create batch plus one boot plus one self-configuration.
    """
    if n_vms == 0:
        return dict.fromkeys(PHASES, 0.0)
    p = effective_parallelism(profile, params)
    return {
        "create": profile.api_call_s * math.ceil(n_vms / p),
        "image_import": profile.image_import_s if import_needed else 0.0,
        "boot": profile.effective_boot_s(n_vms) * jitter,
        "download": 0.0,
        "configure": params.selfconfig_s * jitter,
    }


def centralized_phases(n_vms: int, profile: ProviderProfile,
                       params: StrategyParams,
                       jitter: float = 1.0) -> dict[str, float]:
    """Phase durations for a centralized deployment of n_vms machines.

    Every node pulls vanilla_download_mb over the shared uplink, and the
    external coordinator pushes configuration with a parallelism cap plus
    a serial per-node cost, so both phases grow with n.
    """
    if n_vms == 0:
        return dict.fromkeys(PHASES, 0.0)
    p = effective_parallelism(profile, params)
    download = n_vms * params.vanilla_download_mb * 8.0 / profile.uplink_bw_mbps
    push = (params.tasks_per_node * params.push_rtt_s
            * math.ceil(n_vms / params.parallelism_cap)
            + n_vms * params.provisioner_serialize_s)
    return {
        "create": profile.api_call_s * math.ceil(n_vms / p),
        "image_import": 0.0,
        "boot": profile.effective_boot_s(n_vms) * jitter,
        "download": download * jitter,
        "configure": push * jitter,
    }


def strategy_time(n_vms: int, profile: ProviderProfile, params: StrategyParams,
                  import_needed: bool = False, jitter: float = 1.0) -> float:
    """Closed-form deployment time: the phases are sequential on the
    critical path, so the total is their sum."""
    if params.kind == "decentralized":
        phases = decentralized_phases(n_vms, profile, params, import_needed, jitter)
    else:
        phases = centralized_phases(n_vms, profile, params, jitter)
    return phase_total(phases)


def phase_total(phases: dict[str, float]) -> float:
    # The import is added last: a warm-cache rerun then differs from the
    # cold run by exactly image_import_s, bit for bit.
    total = 0.0
    for name in ("create", "boot", "download", "configure"):
        total += phases[name]
    return total + phases["image_import"]


# -- apply / destroy -------------------------------------------------------


def apply(diff: SpecDiff, cloud: CloudState, params: StrategyParams,
          trial: int = 0) -> DeploymentReport:
    """Execute a plan, driving the cloud's event queue to quiescence.

    Returns a report whose deploy_time_s is the time at which the last
    created node became ready, broken down by phase. An empty plan costs
    exactly one API call (the plan refresh).
    """
    profile = cloud.profile
    t0 = cloud.clock_s
    creates = list(diff.to_create)
    destroys = list(diff.to_destroy)
    n = len(creates)
    nodes_total = sum(1 for d in creates if d.role != "master")
    image = PREPROVISIONED if params.kind == "decentralized" else VANILLA
    j = jitter_factor(cloud.seed, profile.name, params.kind, nodes_total, trial,
                      params.jitter_eps)
    p = effective_parallelism(profile, params)

    destroy_s = profile.api_call_s * math.ceil(len(destroys) / p) if destroys else 0.0
    for i, d in enumerate(destroys):
        cloud.schedule(t0 + profile.api_call_s * (i // p + 1), "vm-delete", d.name)
        cloud.release_vm(d.name)
        if d.volume_gb:
            cloud.delete_volume(f"data-{d.name}")
    if destroys:
        cloud.advance_to(t0 + destroy_s)

    if n == 0:
        phases = dict.fromkeys(PHASES, 0.0)
        if destroys:
            phases["create"] = destroy_s
        else:
            cloud.schedule(t0 + profile.api_call_s, "plan-refresh", "inventory")
            phases["create"] = profile.api_call_s
            cloud.advance_to(t0 + profile.api_call_s)
        return DeploymentReport(profile.name, params.kind, nodes_total, trial,
                                cloud.seed, phase_total(phases), phases)

    if params.kind == "decentralized":
        import_ready = cloud.ensure_image(image)
        phases = decentralized_phases(n, profile, params,
                                      import_needed=import_ready > cloud.clock_s,
                                      jitter=j)
    else:
        import_ready = cloud.clock_s
        phases = centralized_phases(n, profile, params, jitter=j)

    api_base = import_ready
    boot_dur = phases["boot"]
    last_event = api_base
    for i, descriptor in enumerate(creates):
        if descriptor.flavor not in profile.flavor_catalog:
            raise CloudError(f"unknown flavor {descriptor.flavor!r} "
                             f"for provider {profile.name}")
        spec = NodeSpec(
            role=descriptor.role,
            flavor=profile.flavor_catalog[descriptor.flavor],
            public_ip_required=descriptor.public_ip,
            volume_gb=descriptor.volume_gb,
        )
        create_done = api_base + profile.api_call_s * (i // p + 1)
        ready_at = create_done + boot_dur + phases["configure"]
        last_event = max(last_event, ready_at if params.kind == "decentralized"
                         else create_done + boot_dur)
        cloud.provision_vm(
            spec, name=descriptor.name, image=image, start_at=create_done,
            boot_s=boot_dur, config_s=phases["configure"], strategy=params.kind)
        if descriptor.volume_gb:
            volume = cloud.create_volume(descriptor.volume_gb, kind="block",
                                         name=f"data-{descriptor.name}")
            cloud.attach_volume(descriptor.name, volume.id)

    if params.kind == "centralized":
        download_done = last_event + phases["download"]
        cloud.schedule(download_done, "download", "fleet",
                       f"{params.vanilla_download_mb * n:g}MB")
        ready_at = download_done + phases["configure"]
        for descriptor in creates:
            cloud.mark_ready(descriptor.name, ready_at)
        last_event = ready_at

    if any(d.role == "storage" for d in creates) and "shared-fs" not in cloud.volumes:
        cloud.create_volume(0, kind="shared_posix", name="shared-fs")

    phases["create"] += destroy_s
    total = phase_total(phases)
    cloud.advance_to(max(t0 + total, last_event))
    return DeploymentReport(profile.name, params.kind, nodes_total, trial,
                            cloud.seed, total, phases)


def destroy(cloud: CloudState, cluster=None) -> TeardownReport:
    """Release every VM, volume, and public IP; idempotent."""
    names = sorted(cloud.vms, reverse=True)
    volumes = list(cloud.volumes)
    ips_before = len(cloud.public_ips)
    p = cloud.profile.api_parallelism
    teardown_s = cloud.profile.api_call_s * math.ceil(len(names) / p) if names else 0.0
    t0 = cloud.clock_s
    for i, name in enumerate(names):
        cloud.schedule(t0 + cloud.profile.api_call_s * (i // p + 1), "vm-delete", name)
        cloud.release_vm(name)
    for vol in volumes:
        cloud.delete_volume(vol)
    cloud.advance_to(t0 + teardown_s)
    if cluster is not None:
        cluster.nodes.clear()
        cluster.containers.clear()
        cluster.services.clear()
        cluster.volume_claims.clear()
        cluster.secrets.clear()
        cluster._descriptors.clear()
        cluster.degraded = False
    return TeardownReport(
        released_vms=len(names), released_volumes=len(volumes),
        released_ips=ips_before - len(cloud.public_ips), teardown_s=teardown_s)


# -- benchmark harness -------------------------------------------------------


def run_scaling_benchmark(scales: Sequence[int], trials: int,
                          strategies: Iterable[str],
                          provider: str = "openstack-sim",
                          seed: int = 0) -> list[DeploymentReport]:
    """Timed deployments over doubling cluster sizes, repeated per size.

    Each trial deploys a fresh tenancy; the image cache carries across the
    trials of one (strategy, scale) series, so repeated deployments of the
    same cluster import at most once. Rows come out in (strategy, scale,
    trial) order.
    """
    bad = sorted(set(scales) - set(BENCHMARK_SCALES))
    if bad:
        raise ValidationError(f"unsupported benchmark scales: {bad}")
    if trials < 1:
        raise ValidationError("trials must be >= 1")
    profile = get_profile(provider)
    reports = []
    for strategy in strategies:
        params = default_params(provider, strategy)
        for scale in scales:
            spec = default_benchmark_spec(scale, provider=provider, seed=seed)
            cached_images: set[str] = set()
            for trial in range(trials):
                cloud = CloudState(profile, seed=seed)
                cloud.preload_images(cached_images)
                report = apply(diff_spec(None, spec), cloud, params, trial=trial)
                cached_images = set(cloud.images)
                reports.append(report)
    return reports


def reports_csv(reports: Iterable[DeploymentReport]) -> str:
    lines = [REPORT_CSV_HEADER]
    lines.extend(report.csv_row() for report in reports)
    return "\n".join(lines) + "\n"


def reports_json(reports: Iterable[DeploymentReport]) -> str:
    rows = [{
        "provider": r.provider, "strategy": r.strategy,
        "nodes_total": r.nodes_total, "trial": r.trial, "seed": r.seed,
        "deploy_time_s": r.deploy_time_s,
        "create_s": r.phases["create"], "import_s": r.phases["image_import"],
        "boot_s": r.phases["boot"], "download_s": r.phases["download"],
        "configure_s": r.phases["configure"],
    } for r in reports]
    return json.dumps(rows, sort_keys=True, indent=2) + "\n"


def mean_times(reports: Iterable[DeploymentReport]) -> dict[tuple[str, int], float]:
    """Mean deploy time per (strategy, nodes_total) group."""
    sums: dict[tuple[str, int], list[float]] = {}
    for r in reports:
        sums.setdefault((r.strategy, r.nodes_total), []).append(r.deploy_time_s)
    return {key: sum(values) / len(values) for key, values in sums.items()}
