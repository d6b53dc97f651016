import pytest

from minicloud import cluster_spec, deployer, orchestrator, simcloud

MINIMAL_DOC = """\
provider: openstack-sim
nodes:
  service: 5
  storage: 3
  edge: 0
"""


@pytest.fixture
def openstack():
    return simcloud.get_profile("openstack-sim")


@pytest.fixture
def minimal_spec():
    return cluster_spec.parse_spec(MINIMAL_DOC)


@pytest.fixture
def dec_params():
    return deployer.default_params("openstack-sim", "decentralized")


@pytest.fixture
def cen_params():
    return deployer.default_params("openstack-sim", "centralized")


def deploy(spec, seed=0, trial=0):
    """Fresh tenancy brought up to a cluster spec; returns (cloud, cluster, report)."""
    profile = simcloud.get_profile(spec.provider_profile)
    cloud = simcloud.CloudState(profile, seed=seed)
    params = deployer.default_params(spec.provider_profile, spec.strategy)
    report = deployer.apply(cluster_spec.diff_spec(None, spec), cloud, params,
                            trial=trial)
    cluster = orchestrator.build_cluster(cloud, spec)
    return cloud, cluster, report


def synthetic_cluster(service_nodes=5, vcpus_per_node=2, storage_nodes=3,
                      master_schedulable=False):
    """Ready cluster without going through a deployment."""
    cluster = orchestrator.ClusterState(master_schedulable=master_schedulable)
    cluster.add_node("master-000", "master", vcpus_per_node, private_ip="10.0.0.2")
    for i in range(service_nodes):
        cluster.add_node(cluster_spec.node_name("service", i), "service",
                         vcpus_per_node, private_ip=f"10.0.0.{3 + i}")
    for i in range(storage_nodes):
        cluster.add_node(cluster_spec.node_name("storage", i), "storage", 0,
                         private_ip=f"10.0.1.{2 + i}")
    return cluster
