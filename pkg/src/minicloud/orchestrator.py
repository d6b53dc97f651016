"""Miniature container orchestrator over deployed VMs.

Provides worst-fit scheduling with deterministic tie-breaking, replica
rescheduling after node failure, cluster-internal service discovery,
volume claims bound to simulated cloud volumes, and secret management
with strict redaction in every rendered artifact.

Mutations go through the owning event loop one at a time; read-only
queries (resolve_internal, render_state) are safe against a snapshot.
"""

from __future__ import annotations

import copy
import json
import random
from dataclasses import dataclass, field
from typing import Optional

import yaml

from .cluster_spec import ClusterSpec, ResourceDescriptor, DEFAULT_STORAGE_VOLUME_GB
from .errors import OrchestratorError, ValidationError
from .simcloud import CloudState, Event

OVERLAY_PREFIX = "10.244"
RESCHEDULE_DELAY_S = 10.0
SHARED_VOLUME_ID = "shared-fs"
CONTAINER_KINDS = ("short_lived", "long_running")
CLAIM_KINDS = ("block", "shared_posix", "object_bucket")
REDACTED = "<redacted>"

_MANIFEST_GROUP_KEYS = {"name", "image", "replicas", "vcpus", "kind",
                        "expose", "claims", "secrets"}


@dataclass
class NodeView:
    id: str
    role: str
    capacity_vcpus: int
    allocated_vcpus: float
    healthy: bool
    index: int
    private_ip: str
    public_ip: Optional[str]

    @property
    def free_vcpus(self) -> float:
        return self.capacity_vcpus - self.allocated_vcpus


@dataclass
class ContainerRecord:
    id: str
    image: str
    vcpus_request: float
    kind: str
    state: str = "pending"
    node: Optional[str] = None
    overlay_ip: Optional[str] = None
    replica_group: Optional[str] = None
    mounted_claims: list[str] = field(default_factory=list)
    mounted_secrets: list[str] = field(default_factory=list)

    @property
    def terminal(self) -> bool:
        return self.state in ("succeeded", "failed")


@dataclass
class ServiceRecord:
    name: str
    selector: str
    exposed: bool = False


@dataclass
class ClaimRecord:
    name: str
    kind: str
    backing_volume: str
    concurrent_mounts: int = 0


class ClusterState:
    """Orchestrator view of one deployed cluster."""

    def __init__(self, master_schedulable: bool = False, base_domain: str = "nipio",
                 proxy_mode: bool = False, seed: int = 0):
        self.nodes: dict[str, NodeView] = {}
        self.containers: dict[str, ContainerRecord] = {}
        self.services: dict[str, ServiceRecord] = {}
        self.volume_claims: dict[str, ClaimRecord] = {}
        self.secrets: dict[str, bytes] = {}
        self.master_schedulable = master_schedulable
        self.base_domain = base_domain
        self.proxy_mode = proxy_mode
        self.seed = seed
        self.degraded = False
        self.shared_volume_id: Optional[str] = None
        self._next_container = 0
        self._node_containers: dict[str, int] = {}
        self._next_node_index = 0
        self._descriptors: dict[str, ResourceDescriptor] = {}

    # -- construction -----------------------------------------------------

    def add_node(self, node_id: str, role: str, capacity_vcpus: int,
                 private_ip: str = "", public_ip: Optional[str] = None,
                 descriptor: Optional[ResourceDescriptor] = None) -> NodeView:
        if node_id in self.nodes:
            raise OrchestratorError(f"node already registered: {node_id}")
        view = NodeView(
            id=node_id, role=role, capacity_vcpus=capacity_vcpus,
            allocated_vcpus=0.0, healthy=True, index=self._next_node_index,
            private_ip=private_ip, public_ip=public_ip)
        self._next_node_index += 1
        self.nodes[node_id] = view
        self._node_containers[node_id] = 0
        if descriptor is not None:
            self._descriptors[node_id] = descriptor
        return view

    def resource_descriptors(self) -> dict[str, ResourceDescriptor]:
        return dict(self._descriptors)

    @property
    def master_healthy(self) -> bool:
        return any(n.role == "master" and n.healthy for n in self.nodes.values())

    def storage_node_count(self) -> int:
        return sum(1 for n in self.nodes.values() if n.role == "storage" and n.healthy)

    def schedulable_vcpus(self) -> float:
        total = 0.0
        for node in self.nodes.values():
            if node.healthy and _schedulable_role(self, node):
                total += node.free_vcpus
        return total

    # -- queries ------------------------------------------------------------

    def service_endpoints(self, name: str) -> list[str]:
        """Overlay IPs of the running members of the service's group, sorted."""
        if name not in self.services:
            raise ValidationError(f"unknown service: {name}")
        group = self.services[name].selector
        ips = [c.overlay_ip for c in self.containers.values()
               if c.replica_group == group and c.state == "running" and c.overlay_ip]
        return sorted(ips, key=_ip_sort_key)

    def dns_internal(self) -> dict[str, list[str]]:
        return {name: self.service_endpoints(name) for name in sorted(self.services)}


def _ip_sort_key(ip: str):
    return tuple(int(part) for part in ip.split("."))


def _schedulable_role(cluster: ClusterState, node: NodeView) -> bool:
    if node.role == "master":
        return cluster.master_schedulable
    return node.role in ("service", "edge", "storage")


def build_cluster(cloud: CloudState, spec: ClusterSpec) -> ClusterState:
    """Construct the orchestrator view from the deployed, ready VMs."""
    cluster = ClusterState(
        master_schedulable=spec.master_schedulable,
        base_domain=spec.base_domain,
        proxy_mode=spec.proxy_mode,
        seed=spec.seed,
    )
    want = {d.name: d for d in spec.descriptors()}
    for name in sorted(cloud.vms):
        vm = cloud.vms[name]
        if vm.state != "ready":
            raise OrchestratorError(f"vm not ready: {name} ({vm.state})")
        cluster.add_node(
            node_id=name, role=vm.role, capacity_vcpus=vm.flavor.vcpus,
            private_ip=vm.private_ip, public_ip=vm.public_ip,
            descriptor=want.get(name))
    if SHARED_VOLUME_ID in cloud.volumes:
        cluster.shared_volume_id = SHARED_VOLUME_ID
    elif spec.external_filesystem:
        cluster.shared_volume_id = "external-fs"
    return cluster


# -- scheduling ---------------------------------------------------------------


def schedule(cluster: ClusterState, container: ContainerRecord) -> Optional[str]:
    """Place a container on the healthy node with the most free vcpus.

    Ties go to the lexicographically lowest node id. Returns the node id,
    or None (container left pending) when nothing fits. Refused outright
    while the master is down.
    """
    if not cluster.master_healthy:
        raise OrchestratorError("master down: scheduling refused")
    if container.terminal:
        raise OrchestratorError(f"container {container.id} is terminal")
    best: Optional[NodeView] = None
    for node_id in sorted(cluster.nodes):
        node = cluster.nodes[node_id]
        if not node.healthy or not _schedulable_role(cluster, node):
            continue
        if node.free_vcpus < container.vcpus_request:
            continue
        if best is None or node.free_vcpus > best.free_vcpus:
            best = node
    if best is None:
        container.state = "pending"
        container.node = None
        container.overlay_ip = None
        return None
    _place(cluster, container, best)
    return best.id


def _place(cluster: ClusterState, container: ContainerRecord, node: NodeView):
    serial = cluster._node_containers[node.id] + 1
    if serial > 254:
        raise OrchestratorError(f"overlay subnet exhausted on {node.id}")
    cluster._node_containers[node.id] = serial
    node.allocated_vcpus += container.vcpus_request
    container.node = node.id
    container.overlay_ip = f"{OVERLAY_PREFIX}.{node.index}.{serial}"
    container.state = "running"


def add_container(cluster: ClusterState, image: str, vcpus: float,
                  kind: str = "long_running", replica_group: Optional[str] = None,
                  place: bool = True) -> ContainerRecord:
    if kind not in CONTAINER_KINDS:
        raise ValidationError(f"unknown container kind: {kind}")
    if vcpus <= 0:
        raise ValidationError("vcpus_request must be positive")
    container = ContainerRecord(
        id=f"c-{cluster._next_container:04d}", image=image,
        vcpus_request=vcpus, kind=kind, replica_group=replica_group)
    cluster._next_container += 1
    cluster.containers[container.id] = container
    if place:
        schedule(cluster, container)
    return container


def complete_container(cluster: ClusterState, container_id: str,
                       state: str = "succeeded"):
    """Terminate a short-lived container, freeing its node allocation."""
    container = _container(cluster, container_id)
    if state == "succeeded" and container.kind == "long_running":
        raise OrchestratorError("long_running containers never succeed")
    if container.node is not None:
        cluster.nodes[container.node].allocated_vcpus -= container.vcpus_request
    container.state = state


def _container(cluster: ClusterState, container_id: str) -> ContainerRecord:
    if container_id not in cluster.containers:
        raise ValidationError(f"unknown container: {container_id}")
    return cluster.containers[container_id]


# -- failure handling -----------------------------------------------------------


def fail_node(cluster: ClusterState, node_id: str) -> list[str]:
    """Mark a node unhealthy and displace its non-terminal containers.

    Displaced containers re-enter pending; reschedule_pending() (normally
    fired RESCHEDULE_DELAY_S later) places them again.
    """
    if node_id not in cluster.nodes:
        raise ValidationError(f"unknown node: {node_id}")
    node = cluster.nodes[node_id]
    node.healthy = False
    displaced = []
    for cid in sorted(cluster.containers):
        container = cluster.containers[cid]
        if container.node == node_id and not container.terminal:
            node.allocated_vcpus -= container.vcpus_request
            container.state = "pending"
            container.node = None
            container.overlay_ip = None
            displaced.append(cid)
    if node.role == "master" or displaced:
        cluster.degraded = True
    return displaced


def reschedule_pending(cluster: ClusterState) -> list[str]:
    """Place pending replica-group containers; flag degraded on shortfall."""
    if not cluster.master_healthy:
        cluster.degraded = True
        return []
    placed = []
    for cid in sorted(cluster.containers):
        container = cluster.containers[cid]
        if container.state == "pending" and container.replica_group is not None:
            if schedule(cluster, container) is not None:
                placed.append(cid)
    still_pending = any(c.state == "pending" for c in cluster.containers.values())
    cluster.degraded = still_pending or not cluster.master_healthy
    return placed


def reschedule_on_failure(cluster: ClusterState, failed_node: str) -> ClusterState:
    """Immediate-mode failure handling: displace then reschedule at once."""
    fail_node(cluster, failed_node)
    reschedule_pending(cluster)
    return cluster


def bind(cluster: ClusterState, cloud: CloudState):
    """Wire cloud failure events to rescheduling after the fixed delay."""

    def _on_event(event: Event):
        if event.kind != "vm-failed" or event.subject not in cluster.nodes:
            return
        fail_node(cluster, event.subject)
        cloud.schedule(event.time_s + RESCHEDULE_DELAY_S, "reschedule",
                       event.subject, action=lambda: reschedule_pending(cluster))

    cloud.subscribe(_on_event)


# -- discovery, services, secrets ------------------------------------------------


def create_service(cluster: ClusterState, name: str, selector: str,
                   exposed: bool = False) -> ServiceRecord:
    if name in cluster.services:
        raise ValidationError(f"service already exists: {name}")
    record = ServiceRecord(name=name, selector=selector, exposed=exposed)
    cluster.services[name] = record
    return record


def resolve_internal(cluster: ClusterState, name: str,
                     source: str = "cluster") -> list[str]:
    """Cluster-internal DNS: service name to sorted overlay IPs.

    Queries from outside the cluster context are refused.
    """
    if source != "cluster":
        raise OrchestratorError("internal DNS is only available inside the cluster")
    return cluster.service_endpoints(name)


def set_secret(cluster: ClusterState, name: str, value: bytes):
    if not isinstance(value, bytes):
        raise ValidationError("secret value must be bytes")
    cluster.secrets[name] = value


def mount_secret(cluster: ClusterState, container_id: str, secret: str) -> ContainerRecord:
    container = _container(cluster, container_id)
    if secret not in cluster.secrets:
        raise ValidationError(f"unknown secret: {secret}")
    if container.terminal:
        raise OrchestratorError(
            f"cannot mount secret on terminal container {container_id}")
    if secret not in container.mounted_secrets:
        container.mounted_secrets.append(secret)
    return container


def mount_claim(cluster: ClusterState, container_id: str, claim: str) -> ContainerRecord:
    container = _container(cluster, container_id)
    if claim not in cluster.volume_claims:
        raise ValidationError(f"unknown claim: {claim}")
    record = cluster.volume_claims[claim]
    if record.kind == "block" and record.concurrent_mounts >= 1:
        raise OrchestratorError(f"block claim {claim} is already mounted")
    if claim not in container.mounted_claims:
        container.mounted_claims.append(claim)
        record.concurrent_mounts += 1
    return container


# -- package install ---------------------------------------------------------


@dataclass(frozen=True)
class ManifestGroup:
    name: str
    image: str
    replicas: int
    vcpus: float
    kind: str
    expose: bool
    claims: tuple[tuple[str, str], ...]
    secrets: tuple[str, ...]


@dataclass(frozen=True)
class PackageManifest:
    groups: tuple[ManifestGroup, ...]


def parse_manifest(document: str) -> PackageManifest:
    try:
        data = yaml.safe_load(document)
    except yaml.YAMLError as exc:
        raise ValidationError(f"manifest syntax error: {exc}") from exc
    if data is None:
        data = {}
    if not isinstance(data, dict) or set(data) - {"groups"}:
        raise ValidationError("manifest must contain only a 'groups' list")
    groups = []
    seen = set()
    for raw in data.get("groups") or []:
        if not isinstance(raw, dict):
            raise ValidationError("each group must be a mapping")
        unknown = set(raw) - _MANIFEST_GROUP_KEYS
        if unknown:
            raise ValidationError(f"unknown group keys: {', '.join(sorted(unknown))}")
        name = raw.get("name")
        if not isinstance(name, str) or not name:
            raise ValidationError("group name is required")
        if name in seen:
            raise ValidationError(f"duplicate group name: {name}")
        seen.add(name)
        replicas = raw.get("replicas", 1)
        if isinstance(replicas, bool) or not isinstance(replicas, int) or replicas < 1:
            raise ValidationError(f"replicas must be a positive integer: {name}")
        vcpus = raw.get("vcpus", 1)
        if not isinstance(vcpus, (int, float)) or vcpus <= 0:
            raise ValidationError(f"vcpus must be positive: {name}")
        kind = raw.get("kind", "long_running")
        if kind not in CONTAINER_KINDS:
            raise ValidationError(f"unknown kind {kind!r} in group {name}")
        claims = []
        for claim in raw.get("claims") or []:
            if not isinstance(claim, dict) or set(claim) != {"name", "kind"}:
                raise ValidationError(
                    f"claims must be name/kind mappings (group {name})")
            if claim["kind"] not in CLAIM_KINDS:
                raise ValidationError(f"unknown claim kind: {claim['kind']}")
            claims.append((claim["name"], claim["kind"]))
        secrets = tuple(raw.get("secrets") or [])
        groups.append(ManifestGroup(
            name=name, image=raw.get("image", name), replicas=replicas,
            vcpus=float(vcpus), kind=kind, expose=bool(raw.get("expose", False)),
            claims=tuple(claims), secrets=secrets))
    return PackageManifest(groups=tuple(groups))


@dataclass
class InstallResult:
    containers: list[str]
    services: list[str]
    claims: list[str]


def install_package(cluster: ClusterState, manifest: PackageManifest,
                    cloud: Optional[CloudState] = None) -> InstallResult:
    """Install container groups; rolled back completely on any failure.

    Every replica of every group must place; capacity exhaustion undoes
    the whole install. Exposed groups get a service record (route
    registration against the edge is the caller's step, since the route
    table lives with the zone).
    """
    snapshot = _snapshot(cluster)
    created = InstallResult(containers=[], services=[], claims=[])
    try:
        for group in manifest.groups:
            for claim_name, claim_kind in group.claims:
                if claim_name not in cluster.volume_claims:
                    _create_claim(cluster, claim_name, claim_kind, cloud)
                    created.claims.append(claim_name)
                elif cluster.volume_claims[claim_name].kind != claim_kind:
                    raise ValidationError(
                        f"claim {claim_name} exists with a different kind")
            for secret in group.secrets:
                if secret not in cluster.secrets:
                    rng = random.Random(f"secret:{cluster.seed}:{secret}")
                    set_secret(cluster, secret, rng.randbytes(24))
            for _ in range(group.replicas):
                container = add_container(
                    cluster, image=group.image, vcpus=group.vcpus,
                    kind=group.kind, replica_group=group.name)
                created.containers.append(container.id)
                if group.kind == "long_running" and container.state != "running":
                    raise OrchestratorError(
                        f"capacity exhausted installing group {group.name}")
                for claim_name, _ in group.claims:
                    mount_claim(cluster, container.id, claim_name)
                for secret in group.secrets:
                    mount_secret(cluster, container.id, secret)
            if group.expose or group.kind == "long_running":
                create_service(cluster, group.name, group.name,
                               exposed=group.expose)
                created.services.append(group.name)
    except Exception:
        _restore(cluster, snapshot)
        raise
    return created


def _create_claim(cluster: ClusterState, name: str, kind: str,
                  cloud: Optional[CloudState]) -> ClaimRecord:
    if kind == "shared_posix":
        if cluster.shared_volume_id is None:
            raise OrchestratorError(
                "no shared file space: deploy storage nodes or set external_filesystem")
        backing = cluster.shared_volume_id
    elif cloud is not None:
        if kind == "block":
            backing = cloud.create_volume(DEFAULT_STORAGE_VOLUME_GB, kind="block",
                                          name=f"claim-{name}").id
        else:
            backing = cloud.create_bucket(f"bucket-{name}").id
    else:
        raise OrchestratorError(
            f"claim {name} needs a cloud to provision a {kind} volume")
    record = ClaimRecord(name=name, kind=kind, backing_volume=backing)
    cluster.volume_claims[name] = record
    return record


def _snapshot(cluster: ClusterState) -> dict:
    return {
        "containers": copy.deepcopy(cluster.containers),
        "services": copy.deepcopy(cluster.services),
        "claims": copy.deepcopy(cluster.volume_claims),
        "secrets": dict(cluster.secrets),
        "alloc": {n: v.allocated_vcpus for n, v in cluster.nodes.items()},
        "node_containers": dict(cluster._node_containers),
        "next_container": cluster._next_container,
        "degraded": cluster.degraded,
    }


def _restore(cluster: ClusterState, snapshot: dict):
    cluster.containers = snapshot["containers"]
    cluster.services = snapshot["services"]
    cluster.volume_claims = snapshot["claims"]
    cluster.secrets = snapshot["secrets"]
    for name, alloc in snapshot["alloc"].items():
        cluster.nodes[name].allocated_vcpus = alloc
    cluster._node_containers = snapshot["node_containers"]
    cluster._next_container = snapshot["next_container"]
    cluster.degraded = snapshot["degraded"]


# -- rendering ------------------------------------------------------------------


def render_state(cluster: ClusterState) -> str:
    """Deterministic JSON view of the cluster. Secret bytes never appear."""
    state = {
        "degraded": cluster.degraded,
        "base_domain": cluster.base_domain,
        "proxy_mode": cluster.proxy_mode,
        "master_schedulable": cluster.master_schedulable,
        "nodes": {
            name: {
                "role": n.role, "capacity_vcpus": n.capacity_vcpus,
                "allocated_vcpus": n.allocated_vcpus, "healthy": n.healthy,
                "private_ip": n.private_ip, "public_ip": n.public_ip,
            } for name, n in sorted(cluster.nodes.items())
        },
        "containers": {
            cid: {
                "image": c.image, "vcpus": c.vcpus_request, "kind": c.kind,
                "state": c.state, "node": c.node, "overlay_ip": c.overlay_ip,
                "replica_group": c.replica_group,
                "claims": list(c.mounted_claims),
                "secrets": list(c.mounted_secrets),
            } for cid, c in sorted(cluster.containers.items())
        },
        "services": {
            name: {
                "selector": s.selector, "exposed": s.exposed,
                "endpoints": cluster.service_endpoints(name),
            } for name, s in sorted(cluster.services.items())
        },
        "volume_claims": {
            name: {
                "kind": c.kind, "backing_volume": c.backing_volume,
                "concurrent_mounts": c.concurrent_mounts,
            } for name, c in sorted(cluster.volume_claims.items())
        },
        "secrets": {name: REDACTED for name in sorted(cluster.secrets)},
        "dns_internal": cluster.dns_internal(),
    }
    return json.dumps(state, sort_keys=True, indent=2) + "\n"


def cluster_to_dict(cluster: ClusterState) -> dict:
    """Persistable snapshot. Secret values are stored as digests only."""
    import hashlib

    data = json.loads(render_state(cluster))
    data["secrets"] = {
        name: {"sha256": hashlib.sha256(value).hexdigest(), "length": len(value)}
        for name, value in sorted(cluster.secrets.items())
    }
    data["seed"] = cluster.seed
    data["counters"] = {
        "next_container": cluster._next_container,
        "next_node_index": cluster._next_node_index,
        "node_containers": dict(sorted(cluster._node_containers.items())),
        "node_index": {name: n.index for name, n in sorted(cluster.nodes.items())},
    }
    data["shared_volume_id"] = cluster.shared_volume_id
    data["descriptors"] = {
        name: {"role": d.role, "flavor": d.flavor, "public_ip": d.public_ip,
               "volume_gb": d.volume_gb}
        for name, d in sorted(cluster.resource_descriptors().items())
    }
    return data


def cluster_from_dict(data: dict) -> ClusterState:
    cluster = ClusterState(
        master_schedulable=data["master_schedulable"],
        base_domain=data["base_domain"],
        proxy_mode=data["proxy_mode"],
        seed=data["seed"],
    )
    counters = data["counters"]
    for name, n in data["nodes"].items():
        view = cluster.add_node(
            node_id=name, role=n["role"], capacity_vcpus=n["capacity_vcpus"],
            private_ip=n["private_ip"], public_ip=n["public_ip"])
        view.allocated_vcpus = n["allocated_vcpus"]
        view.healthy = n["healthy"]
        view.index = counters["node_index"][name]
        descriptor = data["descriptors"].get(name)
        if descriptor:
            cluster._descriptors[name] = ResourceDescriptor(
                name=name, role=descriptor["role"], flavor=descriptor["flavor"],
                public_ip=descriptor["public_ip"], volume_gb=descriptor["volume_gb"])
    cluster._next_node_index = counters["next_node_index"]
    cluster._node_containers = dict(counters["node_containers"])
    cluster._next_container = counters["next_container"]
    cluster.degraded = data["degraded"]
    cluster.shared_volume_id = data["shared_volume_id"]
    for cid, c in data["containers"].items():
        cluster.containers[cid] = ContainerRecord(
            id=cid, image=c["image"], vcpus_request=c["vcpus"], kind=c["kind"],
            state=c["state"], node=c["node"], overlay_ip=c["overlay_ip"],
            replica_group=c["replica_group"],
            mounted_claims=list(c["claims"]), mounted_secrets=list(c["secrets"]))
    for name, s in data["services"].items():
        cluster.services[name] = ServiceRecord(
            name=name, selector=s["selector"], exposed=s["exposed"])
    for name, c in data["volume_claims"].items():
        cluster.volume_claims[name] = ClaimRecord(
            name=name, kind=c["kind"], backing_volume=c["backing_volume"],
            concurrent_mounts=c["concurrent_mounts"])
    # Secret bytes are not persisted; keep names resolvable for mounts.
    for name in data["secrets"]:
        cluster.secrets[name] = b""
    return cluster
