import pytest
from hypothesis import given, strategies as st

from minicloud import cluster_spec
from minicloud.cluster_spec import (default_benchmark_spec, diff_spec,
                                    parse_spec, render_spec)
from minicloud.errors import ValidationError

from conftest import MINIMAL_DOC, deploy


class TestParse:
    def test_minimal_document_fills_defaults(self):
        spec = parse_spec(MINIMAL_DOC)
        assert spec.provider_profile == "openstack-sim"
        assert (spec.service_count, spec.storage_count, spec.edge_count) == (5, 3, 0)
        assert spec.base_domain == "nipio"
        assert spec.strategy == "decentralized"
        assert spec.proxy_mode is False
        assert spec.master_schedulable is False
        assert spec.seed == 0

    def test_master_acts_as_edge_when_no_edge_nodes(self):
        spec = parse_spec(MINIMAL_DOC)
        assert spec.master.public_ip_required is True

    def test_edge_nodes_take_over_public_ip(self):
        spec = parse_spec(MINIMAL_DOC + "  flavor: {}\n")
        assert spec.edge_count == 0
        spec = parse_spec(
            "provider: openstack-sim\nnodes: {service: 5, storage: 3, edge: 2}\n")
        assert spec.master.public_ip_required is False

    def test_multiple_masters_rejected(self):
        doc = "provider: openstack-sim\nnodes: {master: 2, service: 5, storage: 3}\n"
        with pytest.raises(ValidationError, match="multiple masters unsupported"):
            parse_spec(doc)

    def test_master_only_single_server_is_valid(self):
        doc = ("provider: openstack-sim\nmaster_schedulable: true\n"
               "nodes: {service: 0, storage: 0, edge: 0}\n")
        spec = parse_spec(doc)
        assert spec.total_non_master == 0
        assert spec.master_schedulable is True

    def test_master_only_defaults_to_schedulable(self):
        spec = parse_spec("provider: openstack-sim\nnodes: {}\n")
        assert spec.master_schedulable is True

    def test_storage_zero_needs_external_filesystem(self):
        doc = "provider: openstack-sim\nnodes: {service: 5, storage: 0}\n"
        with pytest.raises(ValidationError, match="external filesystem"):
            parse_spec(doc)
        spec = parse_spec("external_filesystem: true\n" + doc)
        assert spec.storage_count == 0

    def test_unknown_keys_are_hard_errors(self):
        with pytest.raises(ValidationError, match="unknown document keys"):
            parse_spec(MINIMAL_DOC + "colour: blue\n")
        with pytest.raises(ValidationError, match="unknown nodes keys"):
            parse_spec("provider: openstack-sim\nnodes: {service: 1, storage: 1, gpu: 1}\n")

    def test_unknown_flavor_names_provider_catalog(self):
        doc = ("provider: openstack-sim\n"
               "nodes: {service: 1, storage: 1, flavor: {service: xxl}}\n")
        with pytest.raises(ValidationError, match="unknown flavor 'xxl'"):
            parse_spec(doc)

    def test_unknown_provider_lists_known(self):
        with pytest.raises(ValidationError, match="aws-sim"):
            parse_spec("provider: nimbus9\nnodes: {service: 1, storage: 1}\n")

    def test_syntax_error_is_position_annotated(self):
        with pytest.raises(ValidationError, match=r"line \d+"):
            parse_spec("provider: [unclosed\nnodes:\n")

    def test_seed_bounds(self):
        parse_spec(MINIMAL_DOC + f"seed: {2**64 - 1}\n")
        with pytest.raises(ValidationError, match="seed"):
            parse_spec(MINIMAL_DOC + f"seed: {2**64}\n")
        with pytest.raises(ValidationError, match="seed"):
            parse_spec(MINIMAL_DOC + "seed: -1\n")

    def test_negative_count_rejected(self):
        with pytest.raises(ValidationError, match="negative node count"):
            parse_spec("provider: openstack-sim\nnodes: {service: -1, storage: 1}\n")


class TestRoundTrip:
    def test_render_parse_round_trip(self, minimal_spec):
        assert parse_spec(render_spec(minimal_spec)) == minimal_spec

    def test_rendered_specs_are_byte_stable(self, minimal_spec):
        first = render_spec(minimal_spec)
        assert first == render_spec(parse_spec(first))
        assert "\r" not in first

    @given(
        service=st.integers(0, 20),
        storage=st.integers(1, 12),
        edge=st.integers(0, 3),
        proxy=st.booleans(),
        schedulable=st.booleans(),
        strategy=st.sampled_from(cluster_spec.STRATEGIES),
        seed=st.integers(0, 2**64 - 1),
        flavor=st.sampled_from(["s1.modest", "s1.capacious"]),
    )
    def test_round_trip_property(self, service, storage, edge, proxy,
                                 schedulable, strategy, seed, flavor):
        doc = render_spec(parse_spec(
            "provider: openstack-sim\n"
            f"strategy: {strategy}\nseed: {seed}\n"
            f"proxy: {str(proxy).lower()}\n"
            f"master_schedulable: {str(schedulable).lower()}\n"
            "nodes:\n"
            f"  service: {service}\n  storage: {storage}\n  edge: {edge}\n"
            f"  flavor: {{service: {flavor}}}\n"))
        assert parse_spec(doc) == parse_spec(render_spec(parse_spec(doc)))


class TestBenchmarkSpec:
    @pytest.mark.parametrize("scale,service,storage,total", [
        (1, 5, 3, 8),
        (2, 10, 6, 16),
        (4, 20, 12, 32),
        (8, 40, 24, 64),
    ])
    def test_five_to_three_ratio_doubling(self, scale, service, storage, total):
        spec = default_benchmark_spec(scale)
        assert spec.service_count == service
        assert spec.storage_count == storage
        assert spec.total_non_master == total
        assert spec.total_non_master == 8 * scale

    def test_unsupported_scale(self):
        with pytest.raises(ValidationError, match="unsupported benchmark scale"):
            default_benchmark_spec(3)


class TestDiff:
    def test_fresh_deployment_creates_everything(self, minimal_spec):
        diff = diff_spec(None, minimal_spec)
        assert len(diff.to_create) == 9
        assert not diff.to_destroy
        names = [d.name for d in diff.to_create]
        assert names[0] == "master-000"
        assert "service-004" in names and "storage-002" in names

    def test_identical_states_diff_empty(self, minimal_spec):
        _, cluster, _ = deploy(minimal_spec)
        diff = diff_spec(cluster, minimal_spec)
        assert diff.empty
        assert len(diff.unchanged) == 9

    def test_scale_down_destroys_highest_index(self, minimal_spec):
        _, cluster, _ = deploy(minimal_spec)
        smaller = parse_spec(MINIMAL_DOC.replace("service: 5", "service: 4"))
        diff = diff_spec(cluster, smaller)
        assert [d.name for d in diff.to_destroy] == ["service-004"]
        assert not diff.to_create

    def test_flavor_change_replaces_node(self, minimal_spec):
        _, cluster, _ = deploy(minimal_spec)
        changed = parse_spec(MINIMAL_DOC + "  flavor: {service: s1.capacious}\n")
        diff = diff_spec(cluster, changed)
        assert {d.name for d in diff.to_destroy} == {f"service-00{i}" for i in range(5)}
        assert {d.name for d in diff.to_create} == {f"service-00{i}" for i in range(5)}

    def test_lists_partition_union(self, minimal_spec):
        _, cluster, _ = deploy(minimal_spec)
        bigger = parse_spec(MINIMAL_DOC.replace("storage: 3", "storage: 4"))
        diff = diff_spec(cluster, bigger)
        created = set(diff.to_create)
        destroyed = set(diff.to_destroy)
        unchanged = set(diff.unchanged)
        union = set(cluster.resource_descriptors().values()) | set(bigger.descriptors())
        assert created | destroyed | unchanged == union
        assert not created & destroyed
        assert not created & unchanged
        assert not destroyed & unchanged

    def test_diff_is_deterministic(self, minimal_spec):
        a = diff_spec(None, minimal_spec)
        b = diff_spec(None, minimal_spec)
        assert a == b
