"""
Weak scaling of a full pipeline
===============================

Grows the dataset together with the worker count (1/4 of the data on 10
vCPUs, up to the full set on 40) and reports the weak scaling efficiency
WSE(N) = T_10 / T_N. Growing network contention erodes efficiency; the
calibrated contention coefficient lands WSE(40) at 0.83.
"""

from minicloud import cluster_spec, orchestrator
from minicloud.workloads import RunPlan, builtin_tools, default_gamma, wse_series

cluster = orchestrator.ClusterState()
cluster.add_node("master-000", "master", 2)
for i in range(5):
    cluster.add_node(cluster_spec.node_name("service", i), "service", 8)
for i in range(3):
    cluster.add_node(cluster_spec.node_name("storage", i), "storage", 0)

tool = builtin_tools()["ffm-like"]
plan = RunPlan(tool=tool, data_units=250.0, partitions=1,
               storage_nodes_used=3, per_storage_bw_mbps=500.0)

print(f"contention coefficient gamma = {default_gamma():.6f} per vCPU")
print(f"{'vcpus':>6}{'t_seconds':>12}{'wse':>8}")
for result in wse_series(plan, cluster, [10, 20, 30, 40], n_base=10):
    print(f"{result.vcpus:>6}{result.t_seconds:>12.2f}{result.wse:>8.3f}")

# With gamma forced to zero every width runs in the baseline time: the
# efficiency loss is entirely the contention term.
flat = RunPlan(tool=tool, data_units=250.0, partitions=1,
               storage_nodes_used=3, per_storage_bw_mbps=500.0, gamma=0.0)
print()
print("same sweep, contention disabled:")
for result in wse_series(flat, cluster, [10, 20, 30, 40], n_base=10):
    print(f"{result.vcpus:>6}{result.t_seconds:>12.2f}{result.wse:>8.3f}")
