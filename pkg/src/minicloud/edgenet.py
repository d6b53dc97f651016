"""Edge traffic plumbing: wildcard dynamic DNS and round-robin routing.

Two resolution modes exist. With the "nipio" sentinel domain, any name of
the form <label...>.<a>.<b>.<c>.<d>.nip.io resolves to the embedded
address with no configuration. With a real base domain, a wildcard record
answers every label under the domain with the edge nodes' public IPs,
rotated per query. Route rules map hostnames to services and balance
requests round-robin over their live endpoints.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .cluster_spec import NIPIO_DOMAIN
from .errors import DnsError, NoHealthyBackend, RouteNotFound, ValidationError
from .orchestrator import ClusterState

NIPIO_SUFFIX = ("nip", "io")


@dataclass
class DnsZone:
    base_domain: str = NIPIO_DOMAIN
    wildcard_targets: list[str] = field(default_factory=list)
    proxied: bool = False
    _cursor: int = 0

    @property
    def nipio(self) -> bool:
        return self.base_domain == NIPIO_DOMAIN


def parse_nipio(fqdn: str) -> str:
    """Extract the dotted quad immediately preceding .nip.io.

    The four labels before nip.io must each be a canonical decimal octet;
    anything before them is the name part and is ignored.
    """
    labels = fqdn.rstrip(".").split(".")
    if len(labels) < 6 or tuple(labels[-2:]) != NIPIO_SUFFIX:
        raise DnsError(f"not a nip.io name: {fqdn}")
    quad = labels[-6:-2]
    for octet in quad:
        if not octet.isdigit() or str(int(octet)) != octet or int(octet) > 255:
            raise DnsError(f"malformed nip.io address in {fqdn}: {'.'.join(quad)}")
    return ".".join(quad)


def resolve(zone: DnsZone, fqdn: str) -> str:
    """Resolve a fully qualified name against the zone.

    nip.io names decode to their embedded address; wildcard names rotate
    round-robin over the zone's current targets.
    """
    name = fqdn.rstrip(".")
    if not name or any(not label for label in name.split(".")):
        raise DnsError(f"malformed hostname: {fqdn}")
    if zone.nipio:
        return parse_nipio(name)
    suffix = "." + zone.base_domain
    if not name.endswith(suffix) or name == zone.base_domain:
        raise DnsError(f"{fqdn} is outside zone {zone.base_domain}")
    if not zone.wildcard_targets:
        raise DnsError(f"zone {zone.base_domain} has no targets")
    target = zone.wildcard_targets[zone._cursor % len(zone.wildcard_targets)]
    zone._cursor += 1
    return target


def update_records(zone: DnsZone, cluster: ClusterState) -> DnsZone:
    """Point the wildcard at the live edge IPs (master's when edgeless).

    Called after every apply and after any edge failure, so records track
    whatever addresses the current instantiation received.
    """
    edges = [n for n in cluster.nodes.values() if n.role == "edge" and n.healthy]
    if edges:
        targets = [n.public_ip for n in sorted(edges, key=lambda n: n.id) if n.public_ip]
    else:
        targets = [n.public_ip for n in cluster.nodes.values()
                   if n.role == "master" and n.healthy and n.public_ip]
    zone.wildcard_targets = targets
    return zone


def zone_for(cluster: ClusterState) -> DnsZone:
    zone = DnsZone(base_domain=cluster.base_domain, proxied=cluster.proxy_mode)
    return update_records(zone, cluster)


def external_hostname(zone: DnsZone, service: str) -> str:
    """Public name a service is reachable under."""
    if zone.nipio:
        if not zone.wildcard_targets:
            raise DnsError("no public address to build a nip.io name from")
        return f"{service}.{zone.wildcard_targets[0]}.nip.io"
    return f"{service}.{zone.base_domain}"


def hop_mode(zone: DnsZone) -> str:
    """How external hops are marked in rendered route metadata."""
    return "encrypted" if zone.proxied else "direct"


@dataclass
class RouteRule:
    host: str
    service: str
    cursor: int = 0


class RouteTable:
    """Hostname to service rules with per-rule round-robin cursors."""

    def __init__(self):
        self.rules: dict[str, RouteRule] = {}

    def add(self, host: str, service: str) -> RouteRule:
        rule = RouteRule(host=host, service=service)
        self.rules[host] = rule
        return rule

    def to_dict(self) -> dict:
        return {host: {"service": r.service, "cursor": r.cursor}
                for host, r in sorted(self.rules.items())}

    @classmethod
    def from_dict(cls, data: dict) -> "RouteTable":
        table = cls()
        for host, r in data.items():
            table.rules[host] = RouteRule(host=host, service=r["service"],
                                          cursor=r["cursor"])
        return table


def register_exposed(table: RouteTable, zone: DnsZone, cluster: ClusterState) -> list[str]:
    """Create a route rule for every exposed service; returns the hostnames."""
    hosts = []
    for name in sorted(cluster.services):
        service = cluster.services[name]
        if not service.exposed:
            continue
        host = external_hostname(zone, name)
        if host not in table.rules:
            table.add(host, name)
        hosts.append(host)
    return hosts


def route(table: RouteTable, host: str, cluster: ClusterState) -> str:
    """Pick the next backend for a request to `host`, round-robin."""
    rule = table.rules.get(host.rstrip("."))
    if rule is None:
        raise RouteNotFound(f"no route for host {host}")
    if rule.service not in cluster.services:
        raise RouteNotFound(f"route target {rule.service} no longer exists")
    endpoints = cluster.service_endpoints(rule.service)
    if not endpoints:
        raise NoHealthyBackend(f"service {rule.service} has no running endpoints")
    backend = endpoints[rule.cursor % len(endpoints)]
    rule.cursor += 1
    return backend


def route_dump(table: RouteTable, zone: DnsZone, cluster: ClusterState) -> str:
    """CSV of the routing state: host,service,endpoint_count,proxied."""
    lines = ["host,service,endpoint_count,proxied"]
    for host in sorted(table.rules):
        rule = table.rules[host]
        try:
            count = len(cluster.service_endpoints(rule.service))
        except ValidationError:
            count = 0
        lines.append(f"{host},{rule.service},{count},{str(zone.proxied).lower()}")
    return "\n".join(lines) + "\n"
