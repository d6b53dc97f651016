import random

import pytest

from minicloud import cluster_spec, orchestrator
from minicloud.errors import OrchestratorError, ValidationError
from minicloud.orchestrator import (RESCHEDULE_DELAY_S, add_container, bind,
                                    complete_container, create_service,
                                    fail_node, install_package, mount_secret,
                                    parse_manifest, render_state,
                                    reschedule_on_failure, reschedule_pending,
                                    resolve_internal, set_secret)

from conftest import deploy, synthetic_cluster

RESEARCH_ENV_MANIFEST = """\
groups:
  - name: workflow
    image: workflow-engine
    replicas: 2
    vcpus: 1
    expose: true
  - name: monitoring
    image: metrics-stack
    replicas: 1
    vcpus: 1
    expose: true
  - name: notebook
    image: interactive-ui
    replicas: 1
    vcpus: 1
    expose: true
    claims:
      - name: datasets
        kind: shared_posix
"""


class TestScheduling:
    def test_empty_cluster_tie_breaks_to_lowest_id(self):
        cluster = synthetic_cluster(service_nodes=3)
        c = add_container(cluster, "tool", vcpus=1)
        assert c.node == "service-000"
        assert c.state == "running"

    def test_oversized_request_goes_pending(self):
        cluster = synthetic_cluster(service_nodes=3, vcpus_per_node=2)
        c = add_container(cluster, "tool", vcpus=16)
        assert c.state == "pending"
        assert c.node is None

    def test_five_replicas_spread_one_per_node(self):
        # worst-fit placement: each replica lands on the emptiest node
        cluster = synthetic_cluster(service_nodes=5, vcpus_per_node=8)
        nodes = [add_container(cluster, "tool", vcpus=1, replica_group="g").node
                 for _ in range(5)]
        assert sorted(nodes) == [cluster_spec.node_name("service", i)
                                 for i in range(5)]

    def test_master_excluded_unless_schedulable(self):
        restricted = synthetic_cluster(service_nodes=0, storage_nodes=0)
        c = add_container(restricted, "tool", vcpus=1)
        assert c.state == "pending"
        allowed = synthetic_cluster(service_nodes=0, storage_nodes=0,
                                    master_schedulable=True)
        c = add_container(allowed, "tool", vcpus=1)
        assert c.node == "master-000"

    def test_capacity_never_exceeded(self):
        cluster = synthetic_cluster(service_nodes=2, vcpus_per_node=2)
        for _ in range(8):
            add_container(cluster, "tool", vcpus=1)
        for node in cluster.nodes.values():
            assert node.allocated_vcpus <= node.capacity_vcpus

    def test_overlay_ips_unique_and_in_per_node_subnets(self):
        cluster = synthetic_cluster(service_nodes=3, vcpus_per_node=8)
        ips = [add_container(cluster, "tool", vcpus=1).overlay_ip
               for _ in range(12)]
        assert len(set(ips)) == 12
        for ip in ips:
            assert ip.startswith("10.244.")


class TestFailureHandling:
    def make_cluster_with_replicas(self, replicas=6):
        cluster = synthetic_cluster(service_nodes=5, vcpus_per_node=2)
        for _ in range(replicas):
            add_container(cluster, "tool", vcpus=1, replica_group="workers")
        create_service(cluster, "workers", "workers")
        return cluster

    def test_failure_restores_replication(self):
        cluster = self.make_cluster_with_replicas(6)
        victim = next(c.node for c in cluster.containers.values()
                      if c.state == "running")
        reschedule_on_failure(cluster, victim)
        running = [c for c in cluster.containers.values() if c.state == "running"]
        assert len(running) == 6
        assert all(c.node != victim for c in running)
        assert not cluster.degraded

    def test_capacity_shortfall_leaves_pending_and_degraded(self):
        cluster = synthetic_cluster(service_nodes=2, vcpus_per_node=2)
        for _ in range(4):
            add_container(cluster, "tool", vcpus=1, replica_group="workers")
        reschedule_on_failure(cluster, "service-000")
        states = sorted(c.state for c in cluster.containers.values())
        assert states == ["pending", "pending", "running", "running"]
        assert cluster.degraded

    def test_terminal_containers_stay_put(self):
        cluster = synthetic_cluster(service_nodes=2, vcpus_per_node=4)
        done = add_container(cluster, "tool", vcpus=1, kind="short_lived",
                             replica_group="batch")
        node = done.node
        complete_container(cluster, done.id, "succeeded")
        reschedule_on_failure(cluster, node)
        assert done.state == "succeeded"
        assert done.node == node

    def test_master_failure_degrades_and_refuses_scheduling(self):
        cluster = synthetic_cluster(service_nodes=2)
        fail_node(cluster, "master-000")
        assert cluster.degraded
        with pytest.raises(OrchestratorError, match="master down"):
            add_container(cluster, "tool", vcpus=1)
        assert reschedule_pending(cluster) == []

    def test_bound_cluster_reschedules_after_fixed_delay(self, minimal_spec):
        cloud, cluster, _ = deploy(minimal_spec)
        bind(cluster, cloud)
        for _ in range(6):
            add_container(cluster, "tool", vcpus=1, replica_group="workers")
        create_service(cluster, "workers", "workers")
        victim = next(c.node for c in cluster.containers.values())
        t_fail = cloud.clock_s + 5.0
        cloud.inject_failure(victim, t_fail)
        cloud.advance_to(t_fail)
        assert any(c.state == "pending" for c in cluster.containers.values())
        cloud.advance_to(t_fail + RESCHEDULE_DELAY_S)
        running = [c for c in cluster.containers.values() if c.state == "running"]
        assert len(running) == 6


class TestDiscovery:
    def test_endpoints_sorted_numerically(self):
        cluster = synthetic_cluster(service_nodes=5, vcpus_per_node=8)
        for _ in range(3):
            add_container(cluster, "tool", vcpus=1, replica_group="api")
        create_service(cluster, "api", "api")
        eps = resolve_internal(cluster, "api")
        assert len(eps) == 3
        as_tuples = [tuple(int(x) for x in ip.split(".")) for ip in eps]
        assert as_tuples == sorted(as_tuples)

    def test_dead_service_resolves_to_empty_list(self):
        cluster = synthetic_cluster(service_nodes=1, vcpus_per_node=2)
        c = add_container(cluster, "tool", vcpus=1, replica_group="solo")
        create_service(cluster, "solo", "solo")
        fail_node(cluster, c.node)
        assert resolve_internal(cluster, "solo") == []

    def test_external_queries_refused(self):
        cluster = synthetic_cluster()
        create_service(cluster, "api", "api")
        with pytest.raises(OrchestratorError, match="inside the cluster"):
            resolve_internal(cluster, "api", source="external")

    def test_unknown_name(self):
        cluster = synthetic_cluster()
        with pytest.raises(ValidationError, match="unknown service"):
            resolve_internal(cluster, "ghost")

    def test_endpoint_coherence_after_events(self):
        rng = random.Random(7)
        cluster = synthetic_cluster(service_nodes=4, vcpus_per_node=4)
        for _ in range(6):
            add_container(cluster, "tool", vcpus=1, replica_group="api")
        create_service(cluster, "api", "api")
        for _ in range(30):
            action = rng.choice(["fail", "add", "complete"])
            if action == "fail":
                healthy = [n for n in cluster.nodes.values()
                           if n.healthy and n.role == "service"]
                if len(healthy) > 1:
                    reschedule_on_failure(cluster, rng.choice(healthy).id)
            elif action == "add":
                add_container(cluster, "tool", vcpus=1, replica_group="api")
            else:
                running = [c for c in cluster.containers.values()
                           if c.state == "running"]
                if running:
                    complete_container(cluster, rng.choice(running).id, "failed")
            expected = sorted(
                (c.overlay_ip for c in cluster.containers.values()
                 if c.replica_group == "api" and c.state == "running"),
                key=lambda ip: tuple(int(x) for x in ip.split(".")))
            assert cluster.service_endpoints("api") == expected


class TestSecrets:
    def test_mounted_secret_is_redacted_in_renders(self):
        cluster = synthetic_cluster(service_nodes=1)
        set_secret(cluster, "db-password", b"hunter2hunter2")
        c = add_container(cluster, "tool", vcpus=1)
        mount_secret(cluster, c.id, "db-password")
        rendered = render_state(cluster)
        assert "db-password" in rendered
        assert "hunter2" not in rendered
        assert "<redacted>" in rendered

    def test_mount_on_terminal_container_rejected(self):
        cluster = synthetic_cluster(service_nodes=1)
        set_secret(cluster, "token", b"abc123xyz")
        c = add_container(cluster, "tool", vcpus=1, kind="short_lived")
        complete_container(cluster, c.id, "succeeded")
        with pytest.raises(OrchestratorError, match="terminal"):
            mount_secret(cluster, c.id, "token")

    def test_two_containers_share_one_secret(self):
        cluster = synthetic_cluster(service_nodes=2)
        set_secret(cluster, "token", b"abc123xyz")
        a = add_container(cluster, "tool", vcpus=1)
        b = add_container(cluster, "tool", vcpus=1)
        mount_secret(cluster, a.id, "token")
        mount_secret(cluster, b.id, "token")
        assert a.mounted_secrets == ["token"] and b.mounted_secrets == ["token"]

    def test_unknown_secret_or_container(self):
        cluster = synthetic_cluster(service_nodes=1)
        c = add_container(cluster, "tool", vcpus=1)
        with pytest.raises(ValidationError, match="unknown secret"):
            mount_secret(cluster, c.id, "ghost")
        set_secret(cluster, "token", b"abc")
        with pytest.raises(ValidationError, match="unknown container"):
            mount_secret(cluster, "c-9999", "token")


class TestInstall:
    def test_research_environment_manifest(self, minimal_spec):
        cloud, cluster, _ = deploy(minimal_spec)
        manifest = parse_manifest(RESEARCH_ENV_MANIFEST)
        created = install_package(cluster, manifest, cloud=cloud)
        assert len(created.services) == 3
        assert len(created.containers) == 4
        for name in ("workflow", "monitoring", "notebook"):
            assert resolve_internal(cluster, name)
        assert cluster.volume_claims["datasets"].backing_volume == "shared-fs"

    def test_empty_manifest_is_a_noop(self):
        cluster = synthetic_cluster()
        created = install_package(cluster, parse_manifest(""))
        assert created.containers == [] and created.services == []

    def test_capacity_exhaustion_rolls_back(self):
        cluster = synthetic_cluster(service_nodes=1, vcpus_per_node=2)
        manifest = parse_manifest(
            "groups:\n"
            "  - {name: small, image: a, replicas: 1, vcpus: 1}\n"
            "  - {name: big, image: b, replicas: 8, vcpus: 1}\n")
        with pytest.raises(OrchestratorError, match="capacity exhausted"):
            install_package(cluster, manifest)
        assert not cluster.containers
        assert not cluster.services
        assert all(n.allocated_vcpus == 0 for n in cluster.nodes.values())

    def test_block_claim_refuses_second_mount(self):
        cluster = synthetic_cluster(service_nodes=2)
        from minicloud.simcloud import CloudState, get_profile
        cloud = CloudState(get_profile("openstack-sim"))
        manifest = parse_manifest(
            "groups:\n"
            "  - name: db\n    image: postgres\n    replicas: 2\n    vcpus: 1\n"
            "    claims: [{name: pgdata, kind: block}]\n")
        with pytest.raises(OrchestratorError, match="already mounted"):
            install_package(cluster, manifest, cloud=cloud)
        assert not cluster.containers

    def test_manifest_validation(self):
        with pytest.raises(ValidationError, match="unknown group keys"):
            parse_manifest("groups:\n  - {name: a, image: x, color: red}\n")
        with pytest.raises(ValidationError, match="replicas"):
            parse_manifest("groups:\n  - {name: a, image: x, replicas: 0}\n")
        with pytest.raises(ValidationError, match="duplicate group"):
            parse_manifest("groups:\n  - {name: a, image: x}\n  - {name: a, image: y}\n")

    def test_missing_secrets_are_created_and_redacted(self):
        cluster = synthetic_cluster(service_nodes=1, vcpus_per_node=4)
        manifest = parse_manifest(
            "groups:\n"
            "  - {name: ui, image: web, replicas: 1, vcpus: 1, secrets: [session-key]}\n")
        install_package(cluster, manifest)
        assert "session-key" in cluster.secrets
        assert cluster.secrets["session-key"] not in render_state(cluster).encode()


class TestBuildAndRender:
    def test_build_cluster_reflects_deployment(self, minimal_spec):
        cloud, cluster, _ = deploy(minimal_spec)
        assert len(cluster.nodes) == 9
        assert cluster.nodes["master-000"].public_ip is not None
        assert cluster.storage_node_count() == 3
        assert cluster.shared_volume_id == "shared-fs"

    def test_render_is_deterministic(self, minimal_spec):
        _, cluster, _ = deploy(minimal_spec)
        add_container(cluster, "tool", vcpus=1, replica_group="g")
        create_service(cluster, "g", "g")
        assert render_state(cluster) == render_state(cluster)

    def test_state_round_trip(self, minimal_spec):
        _, cluster, _ = deploy(minimal_spec)
        add_container(cluster, "tool", vcpus=1, replica_group="g")
        create_service(cluster, "g", "g", exposed=True)
        set_secret(cluster, "k", b"v" * 8)
        data = orchestrator.cluster_to_dict(cluster)
        restored = orchestrator.cluster_from_dict(data)
        assert orchestrator.cluster_to_dict(restored)["nodes"] == data["nodes"]
        assert restored.service_endpoints("g") == cluster.service_endpoints("g")
        assert set(restored.secrets) == {"k"}
