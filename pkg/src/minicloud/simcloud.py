"""Deterministic discrete-event simulation of one cloud provider tenancy.

A CloudState owns a virtual clock, a resource inventory (VMs, volumes,
public IPs, cached images) and a time-ordered event queue. All operations
are deterministic given (profile, seed) and the call sequence; ties in
event time are broken by insertion order. One event loop per instance;
instances are independent and may run in parallel threads, but a single
instance must never be shared concurrently.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field
from typing import Callable, Optional

from . import fixture
from .cluster_spec import FlavorRef, NodeSpec
from .errors import CloudError, QuotaError

PRIVATE_PREFIX = "10.0"
PUBLIC_PREFIX = "203.0.113"
PREPROVISIONED = "preprovisioned"
VANILLA = "vanilla"
VM_STATES = ("booting", "configuring", "ready", "failed")
VOLUME_KINDS = ("block", "shared_posix", "object_bucket")
EVENT_LOG_HEADER = "time_s,seq,kind,subject,detail"


@dataclass(frozen=True)
class BootKnee:
    """Step increase in boot time once a deployment reaches a size."""

    at_total_vms: int
    extra_boot_s: float


@dataclass(frozen=True)
class ProviderProfile:
    name: str
    vm_boot_s: float
    api_call_s: float
    api_parallelism: int
    image_import_s: float
    uplink_bw_mbps: float
    public_ip_quota: int
    flavor_catalog: dict[str, FlavorRef]
    default_flavor: str
    boot_knee: Optional[BootKnee] = None

    def __post_init__(self):
        if self.api_parallelism < 1:
            raise CloudError(f"api_parallelism must be >= 1: {self.name}")
        for attr in ("vm_boot_s", "api_call_s", "image_import_s", "uplink_bw_mbps"):
            if getattr(self, attr) < 0:
                raise CloudError(f"{attr} must be >= 0: {self.name}")
        if self.public_ip_quota < 0:
            raise CloudError(f"public_ip_quota must be >= 0: {self.name}")

    def effective_boot_s(self, total_vms: int) -> float:
        if self.boot_knee and total_vms >= self.boot_knee.at_total_vms:
            return self.vm_boot_s + self.boot_knee.extra_boot_s
        return self.vm_boot_s


def profile_from_dict(name: str, entry: dict) -> ProviderProfile:
    knee = entry.get("boot_knee")
    return ProviderProfile(
        name=name,
        vm_boot_s=entry["vm_boot_s"],
        api_call_s=entry["api_call_s"],
        api_parallelism=entry["api_parallelism"],
        image_import_s=entry["image_import_s"],
        uplink_bw_mbps=entry["uplink_bw_mbps"],
        public_ip_quota=entry["public_ip_quota"],
        flavor_catalog={n: FlavorRef(n, f["vcpus"], f["ram_gb"])
                        for n, f in entry["flavors"].items()},
        default_flavor=entry["default_flavor"],
        boot_knee=BootKnee(knee["at_total_vms"], knee["extra_boot_s"]) if knee else None,
    )


def get_profile(name: str) -> ProviderProfile:
    return profile_from_dict(name, fixture.provider_entry(name))


def builtin_profiles() -> dict[str, ProviderProfile]:
    return {name: get_profile(name) for name in fixture.provider_names()}


@dataclass(frozen=True)
class Event:
    time_s: float
    seq: int
    kind: str
    subject: str
    detail: str = ""

    def csv_row(self) -> str:
        return f"{self.time_s:.6f},{self.seq},{self.kind},{self.subject},{self.detail}"


@dataclass
class VmRecord:
    id: str
    role: str
    flavor: FlavorRef
    private_ip: str
    public_ip: Optional[str]
    state: str = "booting"
    boot_image: str = PREPROVISIONED


@dataclass
class BlobDescriptor:
    key: str
    size_bytes: int
    version: int
    put_time_s: float


@dataclass
class VolumeRecord:
    id: str
    size_gb: int
    kind: str
    attached_to: list[str] = field(default_factory=list)
    blobs: dict[str, BlobDescriptor] = field(default_factory=dict)


class CloudState:
    """Inventory, virtual clock, and event queue for one simulated tenancy."""

    def __init__(self, profile: ProviderProfile, seed: int = 0):
        self.profile = profile
        self.seed = seed
        self.clock_s = 0.0
        self.vms: dict[str, VmRecord] = {}
        self.volumes: dict[str, VolumeRecord] = {}
        self.public_ips: set[str] = set()
        self.images: set[str] = set()
        self.log: list[Event] = []
        self._queue: list[tuple[float, int, Event]] = []
        self._actions: dict[int, Callable[[], None]] = {}
        self._subscribers: list[Callable[[Event], None]] = []
        self._seq = 0
        self._image_ready: dict[str, float] = {}
        self._next_private_host = 2
        self._used_public_hosts: set[int] = set()
        self._role_counts: dict[str, int] = {}
        self._next_volume = 0
        self._blob_version = 0

    # -- event machinery ---------------------------------------------------

    def subscribe(self, handler: Callable[[Event], None]):
        self._subscribers.append(handler)

    def schedule(self, at: float, kind: str, subject: str, detail: str = "",
                 action: Optional[Callable[[], None]] = None) -> Event:
        if at < self.clock_s:
            raise CloudError(
                f"time regression: cannot schedule {kind} at {at} before clock {self.clock_s}")
        event = Event(at, self._seq, kind, subject, detail)
        self._seq += 1
        heapq.heappush(self._queue, (at, event.seq, event))
        if action is not None:
            self._actions[event.seq] = action
        return event

    def fire_now(self, kind: str, subject: str, detail: str = "") -> Event:
        event = Event(self.clock_s, self._seq, kind, subject, detail)
        self._seq += 1
        self.log.append(event)
        return event

    def advance_to(self, t: float) -> list[Event]:
        """Fire every pending event with time <= t in (time, seq) order."""
        if t < self.clock_s:
            raise CloudError(f"time regression: advance_to({t}) before clock {self.clock_s}")
        fired = []
        while self._queue and self._queue[0][0] <= t:
            _, seq, event = heapq.heappop(self._queue)
            self.clock_s = event.time_s
            self.log.append(event)
            fired.append(event)
            action = self._actions.pop(seq, None)
            if action is not None:
                action()
            for handler in self._subscribers:
                handler(event)
        self.clock_s = t
        return fired

    def drain(self) -> list[Event]:
        """Advance to the last pending event, firing everything."""
        fired = []
        while self._queue:
            fired.extend(self.advance_to(self._queue[0][0]))
        return fired

    @property
    def pending_events(self) -> int:
        return len(self._queue)

    # -- addressing and quota ----------------------------------------------

    def _allocate_private_ip(self) -> str:
        host = self._next_private_host
        self._next_private_host += 1
        if host > 0xFFFF:
            raise CloudError("private address space exhausted (10.0.0.0/16)")
        return f"{PRIVATE_PREFIX}.{host // 256}.{host % 256}"

    def _allocate_public_ip(self) -> str:
        quota = self.profile.public_ip_quota
        if len(self.public_ips) >= quota:
            raise QuotaError(f"public IP quota exceeded (quota={quota})")
        host = 1
        while host in self._used_public_hosts:
            host += 1
        if host > 254:
            raise CloudError("public address pool exhausted")
        self._used_public_hosts.add(host)
        ip = f"{PUBLIC_PREFIX}.{host}"
        self.public_ips.add(ip)
        self.fire_now("ip-allocate", ip)
        return ip

    def _release_public_ip(self, ip: str):
        if ip in self.public_ips:
            self.public_ips.remove(ip)
            self._used_public_hosts.discard(int(ip.rsplit(".", 1)[1]))
            self.fire_now("ip-release", ip)

    # -- images ---------------------------------------------------------------

    def ensure_image(self, image: str) -> float:
        """Import the image if this tenancy has never seen it.

        Returns the virtual time at which the image is usable. The import
        cost is paid at most once per (tenancy, image); vanilla images are
        never imported.
        """
        if image == VANILLA:
            return self.clock_s
        if image in self.images:
            return max(self.clock_s, self._image_ready.get(image, 0.0))
        done = self.clock_s + self.profile.image_import_s
        self.images.add(image)
        self._image_ready[image] = done
        self.schedule(done, "image-import", image)
        return done

    def preload_images(self, images) -> None:
        """Mark images as already imported (cache carried from earlier runs)."""
        for image in images:
            self.images.add(image)
            self._image_ready[image] = 0.0

    # -- compute ----------------------------------------------------------

    def provision_vm(self, spec: NodeSpec, name: Optional[str] = None,
                     image: str = PREPROVISIONED, start_at: Optional[float] = None,
                     boot_s: Optional[float] = None, config_s: float = 0.0,
                     strategy: str = "decentralized") -> VmRecord:
        """Create a VM record and schedule its boot timeline.

        The VM becomes ready at start + boot [+ import on first use]. Under
        the decentralized strategy it self-configures for config_s after
        boot; under the centralized strategy it parks in `configuring`
        until mark_ready() is scheduled by the caller.
        """
        if spec.flavor.name not in self.profile.flavor_catalog:
            known = ", ".join(sorted(self.profile.flavor_catalog))
            raise CloudError(f"unknown flavor {spec.flavor.name!r} (known: {known})")
        if name is None:
            n = self._role_counts.get(spec.role, 0)
            name = f"{spec.role}-{n:03d}"
        if name in self.vms:
            raise CloudError(f"vm already exists: {name}")
        self._role_counts[spec.role] = self._role_counts.get(spec.role, 0) + 1

        public_ip = self._allocate_public_ip() if spec.public_ip_required else None
        vm = VmRecord(
            id=name,
            role=spec.role,
            flavor=spec.flavor,
            private_ip=self._allocate_private_ip(),
            public_ip=public_ip,
            state="booting",
            boot_image=image,
        )
        self.vms[name] = vm

        import_ready = self.ensure_image(image)
        begin = max(import_ready, start_at if start_at is not None else self.clock_s)
        boot = self.profile.vm_boot_s if boot_s is None else boot_s
        boot_done = begin + boot
        self.schedule(begin, "vm-create", name, spec.role)

        def _boot_complete():
            if vm.state == "booting":
                vm.state = "configuring"

        self.schedule(boot_done, "vm-boot", name, action=_boot_complete)
        if strategy == "decentralized":
            self.mark_ready(name, boot_done + config_s)
        return vm

    def mark_ready(self, name: str, at: float) -> Event:
        vm = self._vm(name)

        def _ready():
            if vm.state in ("booting", "configuring"):
                vm.state = "ready"

        return self.schedule(at, "vm-ready", name, action=_ready)

    def inject_failure(self, vm_id: str, at: float) -> Optional[Event]:
        """Schedule a VM failure. A no-op for already-failed VMs."""
        vm = self._vm(vm_id)
        if vm.state == "failed":
            return None

        def _fail():
            if vm.state != "failed":
                vm.state = "failed"

        return self.schedule(at, "vm-failed", vm_id, action=_fail)

    def release_vm(self, name: str):
        vm = self.vms.pop(name, None)
        if vm is None:
            return
        if vm.public_ip:
            self._release_public_ip(vm.public_ip)
        for volume in self.volumes.values():
            if name in volume.attached_to:
                volume.attached_to.remove(name)

    def _vm(self, name: str) -> VmRecord:
        if name not in self.vms:
            raise CloudError(f"unknown vm: {name}")
        return self.vms[name]

    # -- volumes and objects -------------------------------------------------

    def create_volume(self, size_gb: int, kind: str = "block",
                      name: Optional[str] = None) -> VolumeRecord:
        if kind not in VOLUME_KINDS:
            raise CloudError(f"unknown volume kind: {kind}")
        if name is None:
            name = f"vol-{self._next_volume:03d}"
            self._next_volume += 1
        if name in self.volumes:
            raise CloudError(f"volume already exists: {name}")
        volume = VolumeRecord(id=name, size_gb=size_gb, kind=kind)
        self.volumes[name] = volume
        self.fire_now("volume-create", name, kind)
        return volume

    def attach_volume(self, vm_id: str, vol_id: str) -> VolumeRecord:
        vm = self._vm(vm_id)
        if vol_id not in self.volumes:
            raise CloudError(f"unknown volume: {vol_id}")
        volume = self.volumes[vol_id]
        if volume.kind == "block" and volume.attached_to:
            raise CloudError(
                f"block volume {vol_id} already attached to {volume.attached_to[0]}")
        if vm.id in volume.attached_to:
            return volume
        volume.attached_to.append(vm.id)
        self.schedule(self.clock_s + self.profile.api_call_s,
                      "volume-attach", vol_id, vm.id)
        return volume

    def delete_volume(self, vol_id: str):
        self.volumes.pop(vol_id, None)

    def create_bucket(self, name: str) -> VolumeRecord:
        return self.create_volume(0, kind="object_bucket", name=name)

    def object_put(self, bucket: str, key: str, size_bytes: int) -> BlobDescriptor:
        vol = self._bucket(bucket)
        self._blob_version += 1
        blob = BlobDescriptor(key, size_bytes, self._blob_version, self.clock_s)
        vol.blobs[key] = blob
        self.fire_now("object-put", f"{bucket}/{key}", str(size_bytes))
        return blob

    def object_get(self, bucket: str, key: str) -> BlobDescriptor:
        vol = self._bucket(bucket)
        if key not in vol.blobs:
            raise CloudError(f"object not found: {bucket}/{key}")
        return vol.blobs[key]

    def _bucket(self, name: str) -> VolumeRecord:
        vol = self.volumes.get(name)
        if vol is None or vol.kind != "object_bucket":
            raise CloudError(f"unknown bucket: {name}")
        return vol

    # -- export and persistence ------------------------------------------------

    def export_event_log(self) -> str:
        lines = [EVENT_LOG_HEADER]
        lines.extend(event.csv_row() for event in self.log)
        return "\n".join(lines) + "\n"

    def to_dict(self) -> dict:
        """Quiescent snapshot for persistence; pending events are not saved."""
        if self._queue:
            raise CloudError("cannot snapshot with pending events")
        return {
            "profile": self.profile.name,
            "seed": self.seed,
            "clock_s": self.clock_s,
            "seq": self._seq,
            "next_private_host": self._next_private_host,
            "next_volume": self._next_volume,
            "blob_version": self._blob_version,
            "role_counts": dict(sorted(self._role_counts.items())),
            "images": sorted(self.images),
            "vms": {
                name: {
                    "role": vm.role, "flavor": vm.flavor.name,
                    "private_ip": vm.private_ip, "public_ip": vm.public_ip,
                    "state": vm.state, "boot_image": vm.boot_image,
                } for name, vm in sorted(self.vms.items())
            },
            "volumes": {
                name: {
                    "size_gb": vol.size_gb, "kind": vol.kind,
                    "attached_to": list(vol.attached_to),
                    "blobs": {
                        k: {"size_bytes": b.size_bytes, "version": b.version,
                            "put_time_s": b.put_time_s}
                        for k, b in sorted(vol.blobs.items())
                    },
                } for name, vol in sorted(self.volumes.items())
            },
        }

    @classmethod
    def from_dict(cls, data: dict) -> "CloudState":
        cloud = cls(get_profile(data["profile"]), seed=data["seed"])
        cloud.clock_s = data["clock_s"]
        cloud._seq = data["seq"]
        cloud._next_private_host = data["next_private_host"]
        cloud._next_volume = data["next_volume"]
        cloud._blob_version = data["blob_version"]
        cloud._role_counts = dict(data["role_counts"])
        cloud.preload_images(data["images"])
        for name, vm in data["vms"].items():
            flavor = cloud.profile.flavor_catalog[vm["flavor"]]
            cloud.vms[name] = VmRecord(
                id=name, role=vm["role"], flavor=flavor,
                private_ip=vm["private_ip"], public_ip=vm["public_ip"],
                state=vm["state"], boot_image=vm["boot_image"])
            if vm["public_ip"]:
                cloud.public_ips.add(vm["public_ip"])
                cloud._used_public_hosts.add(int(vm["public_ip"].rsplit(".", 1)[1]))
        for name, vol in data["volumes"].items():
            record = VolumeRecord(
                id=name, size_gb=vol["size_gb"], kind=vol["kind"],
                attached_to=list(vol["attached_to"]))
            for key, blob in vol["blobs"].items():
                record.blobs[key] = BlobDescriptor(
                    key, blob["size_bytes"], blob["version"], blob["put_time_s"])
            cloud.volumes[name] = record
        return cloud
