"""Command-line surface: init, plan, apply, install, bench, resolve, destroy, status.

A deployment directory holds the cluster document, a lock record, and the
serialized simulated state, so consecutive invocations operate on the
same tenancy. Every subcommand is deterministic given the directory
contents, flags, and seed. Exit codes: 0 success, 2 validation error,
3 simulated-cloud error, 4 state or lock error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from pathlib import Path
from typing import Optional

from . import (cluster_spec, deployer, edgenet, fixture, orchestrator,
               simcloud, workloads)
from .errors import (CloudError, DnsError, MiniCloudError, StateError,
                     ValidationError)

SPEC_FILE = "cluster.yaml"
STATE_FILE = "state.json"
LOCK_FILE = "minicloud.lock.json"
APPLY_GUARD = ".apply-in-progress"

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_CLOUD = 3
EXIT_STATE = 4

_TEMPLATE = """\
# Cluster document for {provider}.
# Adjust the node counts and flavors, then run: minicloud apply
provider: {provider}
domain: nipio            # base domain for exposed services; "nipio" needs no setup
strategy: decentralized  # decentralized | centralized
seed: 42
proxy: false             # proxy external traffic (hops marked encrypted)
master_schedulable: false
external_filesystem: false
nodes:
  service: 5
  storage: 3
  edge: 0                # with no edge nodes the master acts as reverse proxy
  flavor:
    master: {flavor}
    service: {flavor}
    storage: {flavor}
    edge: {flavor}
"""


def main(argv: Optional[list[str]] = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    out = _Output(quiet=args.quiet)
    try:
        return args.handler(args, out)
    except (ValidationError, DnsError) as exc:
        out.error(f"error: {exc}")
        return EXIT_VALIDATION
    except CloudError as exc:
        out.error(f"cloud error: {exc}")
        return EXIT_CLOUD
    except StateError as exc:
        out.error(f"state error: {exc}")
        return EXIT_STATE
    except MiniCloudError as exc:
        out.error(f"error: {exc}")
        return EXIT_CLOUD


class _Output:
    def __init__(self, quiet: bool = False):
        self.quiet = quiet

    def say(self, text: str = ""):
        if not self.quiet:
            print(text)

    def emit(self, text: str):
        sys.stdout.write(text)

    def error(self, text: str):
        print(text, file=sys.stderr)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="minicloud",
        description="Deploy and benchmark clusters on a simulated cloud.")
    parser.add_argument("--seed", type=int, default=None,
                        help="override the document seed (unsigned 64-bit)")
    parser.add_argument("--format", choices=("csv", "json"), default="csv",
                        help="output format for report-emitting commands")
    parser.add_argument("--quiet", action="store_true",
                        help="suppress informational output")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("init", help="create a deployment directory")
    p.add_argument("provider")
    p.add_argument("directory")
    p.set_defaults(handler=cmd_init)

    for name, handler, help_text in (
            ("plan", cmd_plan, "show the diff without applying"),
            ("apply", cmd_apply, "apply the cluster document"),
            ("destroy", cmd_destroy, "tear the cluster down"),
            ("status", cmd_status, "summarize the deployed cluster")):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("directory", nargs="?", default=".")
        p.set_defaults(handler=handler)

    p = sub.add_parser("install", help="install a package manifest")
    p.add_argument("directory")
    p.add_argument("manifest")
    p.set_defaults(handler=cmd_install)

    p = sub.add_parser("resolve", help="resolve a hostname")
    p.add_argument("fqdn")
    p.add_argument("--directory", default=None,
                   help="deployment directory providing the zone")
    p.set_defaults(handler=cmd_resolve)

    p = sub.add_parser("bench", help="run a benchmark harness")
    p.add_argument("kind", choices=("deploy", "speedup", "weak"))
    p.add_argument("--provider", default="openstack-sim")
    p.add_argument("--scales", default="1,2,4,8",
                   help="deploy: comma-separated scale factors")
    p.add_argument("--trials", type=int, default=5)
    p.add_argument("--strategies", default="decentralized,centralized")
    p.add_argument("--vcpus", default="1,2,4,8",
                   help="speedup/weak: comma-separated vCPU counts")
    p.add_argument("--base", type=int, default=10,
                   help="weak: baseline vCPU count")
    p.add_argument("--tool", default="csi-like")
    p.add_argument("--storage-nodes", type=int, default=3)
    p.add_argument("--data-units", type=float, default=1000.0)
    p.add_argument("--out", default=None, help="write rows to a file")
    p.set_defaults(handler=cmd_bench)

    return parser


# -- deployment directory ------------------------------------------------------


def _digest(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


class DeployDirectory:
    """Directory-backed deployment: document, lock record, saved state."""

    def __init__(self, path: Path):
        self.path = Path(path)

    @property
    def spec_path(self) -> Path:
        return self.path / SPEC_FILE

    @property
    def state_path(self) -> Path:
        return self.path / STATE_FILE

    @property
    def lock_path(self) -> Path:
        return self.path / LOCK_FILE

    def require_initialized(self):
        if not self.spec_path.is_file():
            raise StateError(
                f"not a deployment directory (no {SPEC_FILE}): {self.path}")

    def read_spec(self, seed_override: Optional[int]) -> cluster_spec.ClusterSpec:
        self.require_initialized()
        spec = cluster_spec.parse_spec(self.spec_path.read_text("utf-8"))
        if seed_override is not None:
            if not 0 <= seed_override <= cluster_spec.MAX_SEED:
                raise ValidationError(f"seed out of range: {seed_override}")
            spec = cluster_spec.ClusterSpec(
                **{**spec.__dict__, "seed": seed_override})
        return spec

    def load_state(self):
        """Returns (cloud, cluster, zone, routes) or None when not applied."""
        if not self.state_path.is_file():
            return None
        text = self.state_path.read_text("utf-8")
        if self.lock_path.is_file():
            lock = json.loads(self.lock_path.read_text("utf-8"))
            if lock.get("digest") != _digest(text):
                raise StateError(
                    "state file does not match the lock record; refusing to continue")
        data = json.loads(text)
        cloud = simcloud.CloudState.from_dict(data["cloud"])
        cluster = orchestrator.cluster_from_dict(data["cluster"])
        zone = edgenet.DnsZone(
            base_domain=data["zone"]["base_domain"],
            wildcard_targets=list(data["zone"]["wildcard_targets"]),
            proxied=data["zone"]["proxied"])
        zone._cursor = data["zone"]["cursor"]
        routes = edgenet.RouteTable.from_dict(data["routes"])
        return cloud, cluster, zone, routes

    def save_state(self, cloud, cluster, zone, routes):
        data = {
            "cloud": cloud.to_dict(),
            "cluster": orchestrator.cluster_to_dict(cluster),
            "zone": {
                "base_domain": zone.base_domain,
                "wildcard_targets": list(zone.wildcard_targets),
                "proxied": zone.proxied,
                "cursor": zone._cursor,
            },
            "routes": routes.to_dict(),
        }
        text = json.dumps(data, sort_keys=True, indent=2) + "\n"
        self.state_path.write_text(text, encoding="utf-8")
        lock = {
            "provider": cloud.profile.name,
            "seed": cloud.seed,
            "digest": _digest(text),
        }
        self.lock_path.write_text(json.dumps(lock, sort_keys=True, indent=2) + "\n",
                                  encoding="utf-8")

    def clear_state(self):
        self.state_path.unlink(missing_ok=True)
        self.lock_path.unlink(missing_ok=True)

    def guard(self):
        return _ApplyGuard(self.path / APPLY_GUARD)


class _ApplyGuard:
    """Advisory lock preventing concurrent applies on one directory."""

    def __init__(self, path: Path):
        self.path = path

    def __enter__(self):
        try:
            self.path.touch(exist_ok=False)
        except FileExistsError:
            raise StateError(
                f"another apply appears to be in progress ({self.path.name} exists)")
        return self

    def __exit__(self, *exc_info):
        self.path.unlink(missing_ok=True)
        return False


# -- subcommands ---------------------------------------------------------


def cmd_init(args, out: _Output) -> int:
    entry = fixture.provider_entry(args.provider)
    directory = Path(args.directory)
    if directory.exists() and any(directory.iterdir()):
        raise StateError(f"directory exists and is not empty: {directory}")
    directory.mkdir(parents=True, exist_ok=True)
    template = _TEMPLATE.format(provider=args.provider,
                                flavor=entry["default_flavor"])
    (directory / SPEC_FILE).write_text(template, encoding="utf-8")
    out.say(f"initialized {directory} for {args.provider}")
    out.say(f"edit {directory / SPEC_FILE} then run: minicloud apply {directory}")
    return EXIT_OK


def _plan_lines(diff: cluster_spec.SpecDiff) -> list[str]:
    lines = [f"plan: {len(diff.to_create)} to create, "
             f"{len(diff.to_destroy)} to destroy, "
             f"{len(diff.unchanged)} unchanged"]
    for d in diff.to_create:
        ip = ", public-ip" if d.public_ip else ""
        vol = f", {d.volume_gb}GB volume" if d.volume_gb else ""
        lines.append(f"  + {d.name} ({d.role}, {d.flavor}{ip}{vol})")
    for d in diff.to_destroy:
        lines.append(f"  - {d.name} ({d.role}, {d.flavor})")
    return lines


def _current_descriptors(state) -> Optional[dict]:
    if state is None:
        return None
    _, cluster, _, _ = state
    return cluster.resource_descriptors()


def cmd_plan(args, out: _Output) -> int:
    directory = DeployDirectory(Path(args.directory))
    spec = directory.read_spec(args.seed)
    diff = cluster_spec.diff_spec(_current_descriptors(directory.load_state()), spec)
    for line in _plan_lines(diff):
        out.say(line)
    if diff.empty:
        out.say("no changes")
    return EXIT_OK


def _report_block(report: deployer.DeploymentReport, fmt: str) -> str:
    if fmt == "json":
        return deployer.reports_json([report])
    return deployer.reports_csv([report])


def cmd_apply(args, out: _Output) -> int:
    directory = DeployDirectory(Path(args.directory))
    spec = directory.read_spec(args.seed)
    with directory.guard():
        state = directory.load_state()
        diff = cluster_spec.diff_spec(_current_descriptors(state), spec)
        for line in _plan_lines(diff):
            out.say(line)
        if state is not None and state[0].profile.name != spec.provider_profile:
            raise StateError(
                "provider changed; destroy the existing cluster first")
        if state is None:
            cloud = simcloud.CloudState(simcloud.get_profile(spec.provider_profile),
                                        seed=spec.seed)
        else:
            cloud = state[0]
        params = deployer.default_params(spec.provider_profile, spec.strategy)
        report = deployer.apply(diff, cloud, params)
        cluster = orchestrator.build_cluster(cloud, spec)
        if state is not None:
            _carry_workloads(state[1], cluster)
        zone = edgenet.zone_for(cluster)
        routes = state[3] if state is not None else edgenet.RouteTable()
        edgenet.register_exposed(routes, zone, cluster)
        directory.save_state(cloud, cluster, zone, routes)
        if diff.empty:
            out.say("no changes")
        out.say(f"ready: {len(cluster.nodes)} nodes in {report.deploy_time_s:.6f} s")
        if zone.wildcard_targets:
            star = "*" if not zone.nipio else f"*.{zone.wildcard_targets[0]}"
            out.say(f"dns: {star}.{'nip.io' if zone.nipio else zone.base_domain} "
                    f"-> {', '.join(zone.wildcard_targets)}")
        out.emit(_report_block(report, args.format))
    return EXIT_OK


def _carry_workloads(old: orchestrator.ClusterState,
                     new: orchestrator.ClusterState):
    """Resize keeps installed containers and services on surviving nodes."""
    new.containers = old.containers
    new.services = old.services
    new.volume_claims = old.volume_claims
    new.secrets = old.secrets
    new._next_container = old._next_container
    # Surviving nodes keep their overlay subnet (index) and serial counter;
    # brand-new nodes get indices above everything ever assigned, so old
    # container addresses can never collide with new ones.
    next_index = max((n.index for n in old.nodes.values()), default=-1) + 1
    for node_id in sorted(new.nodes):
        if node_id in old.nodes:
            new.nodes[node_id].index = old.nodes[node_id].index
            new._node_containers[node_id] = old._node_containers[node_id]
        else:
            new.nodes[node_id].index = next_index
            next_index += 1
    new._next_node_index = next_index
    for container in new.containers.values():
        if container.node is not None and container.node not in new.nodes:
            container.state = "pending"
            container.node = None
            container.overlay_ip = None
        elif container.node is not None and not container.terminal:
            new.nodes[container.node].allocated_vcpus += container.vcpus_request
    orchestrator.reschedule_pending(new)


def cmd_install(args, out: _Output) -> int:
    directory = DeployDirectory(Path(args.directory))
    directory.require_initialized()
    state = directory.load_state()
    if state is None:
        raise StateError("no cluster: run apply first")
    cloud, cluster, zone, routes = state
    manifest_path = Path(args.manifest)
    if not manifest_path.is_file():
        raise ValidationError(f"manifest not found: {manifest_path}")
    manifest = orchestrator.parse_manifest(manifest_path.read_text("utf-8"))
    created = orchestrator.install_package(cluster, manifest, cloud=cloud)
    hosts = edgenet.register_exposed(routes, zone, cluster)
    directory.save_state(cloud, cluster, zone, routes)
    out.say(f"installed: {len(created.containers)} containers, "
            f"{len(created.services)} services, {len(created.claims)} claims")
    for host in hosts:
        out.say(f"exposed: {host}")
    return EXIT_OK


def cmd_status(args, out: _Output) -> int:
    directory = DeployDirectory(Path(args.directory))
    directory.require_initialized()
    state = directory.load_state()
    if state is None:
        out.say("no cluster")
        return EXIT_OK
    _, cluster, zone, _ = state
    running = sum(1 for c in cluster.containers.values() if c.state == "running")
    out.say(f"nodes: {len(cluster.nodes)} "
            f"({sum(1 for n in cluster.nodes.values() if n.healthy)} healthy)")
    out.say(f"containers: {len(cluster.containers)} ({running} running)")
    out.say(f"services: {len(cluster.services)}")
    out.say(f"domain: {zone.base_domain}"
            + (f" -> {', '.join(zone.wildcard_targets)}" if zone.wildcard_targets else ""))
    out.say(f"degraded: {str(cluster.degraded).lower()}")
    return EXIT_OK


def cmd_destroy(args, out: _Output) -> int:
    directory = DeployDirectory(Path(args.directory))
    directory.require_initialized()
    state = directory.load_state()
    if state is None:
        out.say("no cluster")
        return EXIT_OK
    cloud, cluster, _, _ = state
    report = deployer.destroy(cloud, cluster)
    directory.clear_state()
    out.say(f"destroyed: {report.released_vms} vms, {report.released_volumes} volumes, "
            f"{report.released_ips} public ips in {report.teardown_s:.6f} s")
    return EXIT_OK


def cmd_resolve(args, out: _Output) -> int:
    name = args.fqdn.rstrip(".")
    if name.endswith(".nip.io"):
        out.emit(edgenet.parse_nipio(name) + "\n")
        return EXIT_OK
    if args.directory is None:
        raise DnsError(
            f"{args.fqdn} is not a nip.io name; pass --directory for the zone")
    state = DeployDirectory(Path(args.directory)).load_state()
    if state is None:
        raise StateError("no cluster: run apply first")
    _, _, zone, _ = state
    out.emit(edgenet.resolve(zone, args.fqdn) + "\n")
    return EXIT_OK


def _parse_int_list(text: str, flag: str) -> list[int]:
    try:
        return [int(part) for part in text.split(",") if part]
    except ValueError:
        raise ValidationError(f"{flag} expects comma-separated integers: {text!r}")


def cmd_bench(args, out: _Output) -> int:
    seed = args.seed if args.seed is not None else 0
    if args.kind == "deploy":
        strategies = [s for s in args.strategies.split(",") if s]
        for strategy in strategies:
            if strategy not in cluster_spec.STRATEGIES:
                raise ValidationError(f"unknown strategy: {strategy}")
        reports = deployer.run_scaling_benchmark(
            _parse_int_list(args.scales, "--scales"), args.trials, strategies,
            provider=args.provider, seed=seed)
        text = (deployer.reports_json(reports) if args.format == "json"
                else deployer.reports_csv(reports))
    else:
        text = _bench_workloads(args)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
        out.say(f"wrote {args.out}")
    else:
        out.emit(text)
    return EXIT_OK


def _bench_workloads(args) -> str:
    vcpus = _parse_int_list(args.vcpus, "--vcpus")
    if not vcpus:
        raise ValidationError("--vcpus must not be empty")
    tool = workloads.get_tool(args.tool)
    cluster = _bench_cluster(max(max(vcpus), args.base), args.storage_nodes)
    plan = workloads.RunPlan(
        tool=tool, data_units=args.data_units, partitions=1,
        storage_nodes_used=args.storage_nodes,
        per_storage_bw_mbps=workloads.default_storage_bw_mbps())
    if args.kind == "speedup":
        results = workloads.speedup_series(plan, cluster, vcpus)
        rows = workloads.results_csv(results, args.tool, "strong")
    else:
        results = workloads.wse_series(plan, cluster, vcpus, args.base)
        rows = workloads.results_csv(results, args.tool, "weak")
    if args.format == "json":
        header, *lines = rows.strip().split("\n")
        keys = header.split(",")
        data = [dict(zip(keys, line.split(","))) for line in lines]
        return json.dumps(data, sort_keys=True, indent=2) + "\n"
    return rows


def _bench_cluster(max_vcpus: int, storage_nodes: int) -> orchestrator.ClusterState:
    """Synthetic ready cluster big enough for the requested sweep."""
    cluster = orchestrator.ClusterState()
    cluster.add_node("master-000", "master", 2, private_ip="10.0.0.2")
    per_node = 8
    count = max(1, -(-max_vcpus // per_node))
    for i in range(count):
        cluster.add_node(cluster_spec.node_name("service", i), "service",
                         per_node, private_ip=f"10.0.0.{3 + i}")
    for i in range(storage_nodes):
        cluster.add_node(cluster_spec.node_name("storage", i), "storage", 0,
                         private_ip=f"10.0.1.{2 + i}")
    return cluster


if __name__ == "__main__":
    raise SystemExit(main())
