"""
One cluster, end to end
=======================

Walks the whole lifecycle in-process: declare a cluster, plan and apply it
against the simulated provider, stand up services from a manifest, route
requests through the edge, kill a node and watch the replicas converge,
then tear everything down.
"""

from minicloud import cluster_spec, deployer, edgenet, orchestrator, simcloud

DOCUMENT = """\
provider: openstack-sim
seed: 42
nodes:
  service: 5
  storage: 3
  edge: 0
"""

MANIFEST = """\
groups:
  - name: workflow
    image: workflow-engine
    replicas: 3
    vcpus: 1
    expose: true
  - name: monitoring
    image: metrics-stack
    replicas: 1
    vcpus: 1
    expose: true
    secrets: [dashboard-password]
"""

spec = cluster_spec.parse_spec(DOCUMENT)
diff = cluster_spec.diff_spec(None, spec)
print(f"plan: {len(diff.to_create)} resources to create")

cloud = simcloud.CloudState(simcloud.get_profile(spec.provider_profile),
                            seed=spec.seed)
params = deployer.default_params(spec.provider_profile, spec.strategy)
report = deployer.apply(diff, cloud, params)
print(f"applied in {report.deploy_time_s:.1f} simulated seconds "
      f"(import {report.phases['image_import']:.0f}, "
      f"boot {report.phases['boot']:.1f}, "
      f"configure {report.phases['configure']:.1f})")

cluster = orchestrator.build_cluster(cloud, spec)
orchestrator.bind(cluster, cloud)
zone = edgenet.zone_for(cluster)
print(f"wildcard dns -> {zone.wildcard_targets}")

manifest = orchestrator.parse_manifest(MANIFEST)
created = orchestrator.install_package(cluster, manifest, cloud=cloud)
routes = edgenet.RouteTable()
hosts = edgenet.register_exposed(routes, zone, cluster)
print(f"installed {len(created.containers)} containers; exposed: {hosts}")

host = hosts[-1]
print(f"resolve {host} -> {edgenet.resolve(zone, host)}")
print("round robin over workflow replicas:",
      [edgenet.route(routes, host, cluster) for _ in range(3)])

# Kill the node holding a workflow replica; the orchestrator reschedules
# the displaced replicas within the fixed delay.
victim = next(c.node for c in cluster.containers.values()
              if c.replica_group == "workflow")
t_fail = cloud.clock_s + 30.0
cloud.inject_failure(victim, t_fail)
cloud.advance_to(t_fail)
pending = sum(1 for c in cluster.containers.values() if c.state == "pending")
print(f"{victim} failed: {pending} replica(s) displaced")
cloud.advance_to(t_fail + orchestrator.RESCHEDULE_DELAY_S)
endpoints = orchestrator.resolve_internal(cluster, "workflow")
print(f"recovered: workflow endpoints {endpoints}")

teardown = deployer.destroy(cloud, cluster)
print(f"destroyed {teardown.released_vms} vms, released "
      f"{teardown.released_ips} public ip(s); inventory empty: {not cloud.vms}")
