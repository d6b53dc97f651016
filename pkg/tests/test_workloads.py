import pytest
from hypothesis import given, settings, strategies as st

from minicloud import fixture
from minicloud.errors import OrchestratorError, ValidationError
from minicloud.workloads import (RunPlan, ToolProfile, builtin_tools,
                                 default_gamma, knee_vcpus, model_time,
                                 results_csv, run, simulate_run,
                                 speedup_series, wse_series)

from conftest import synthetic_cluster

IDEAL = ToolProfile("ideal", cpu_seconds_per_unit=1.0, io_bytes_per_unit=0.0,
                    fixed_overhead_s=0.0)


def plan_for(tool, n, storage=3, units=1000.0, **kw):
    return RunPlan(tool=tool, data_units=units, partitions=n, mode="strong",
                   storage_nodes_used=storage, per_storage_bw_mbps=500.0, **kw)


def big_cluster(vcpus=128, storage=5):
    per_node = 8
    return synthetic_cluster(service_nodes=vcpus // per_node,
                             vcpus_per_node=per_node, storage_nodes=storage)


class TestStrongScaling:
    def test_single_partition_speedup_is_one(self):
        cluster = big_cluster()
        results = speedup_series(plan_for(IDEAL, 1, storage=0), cluster, [1])
        assert results[0].speedup == 1.0

    def test_ideal_tool_scales_perfectly(self):
        cluster = big_cluster()
        plan = plan_for(IDEAL, 1, storage=0)
        for result in speedup_series(plan, cluster, [1, 2, 4, 8]):
            assert result.speedup == float(result.vcpus)

    def test_speedup_bounded_by_n(self):
        cluster = big_cluster()
        for tool in builtin_tools().values():
            for result in speedup_series(plan_for(tool, 1), cluster,
                                         [1, 2, 4, 8, 16, 64]):
                assert result.speedup <= result.vcpus + 1e-9

    def test_speedups_monotone_increasing(self):
        cluster = big_cluster()
        tool = builtin_tools()["ffm-like"]
        results = speedup_series(plan_for(tool, 1), cluster, [20, 40, 60, 80])
        speedups = [r.speedup for r in results]
        assert speedups == sorted(speedups)
        assert speedups[0] > 1

    def test_more_storage_never_hurts(self):
        cluster = big_cluster()
        tool = builtin_tools()["csi-like"]
        for n in (4, 16, 64):
            s1 = speedup_series(plan_for(tool, 1, storage=1), cluster, [n])[0]
            s5 = speedup_series(plan_for(tool, 1, storage=5), cluster, [n])[0]
            assert s5.speedup >= s1.speedup

    def test_single_storage_levels_out_earlier(self):
        tool = builtin_tools()["csi-like"]
        knee1 = knee_vcpus(plan_for(tool, 1, storage=1))
        knee5 = knee_vcpus(plan_for(tool, 1, storage=5))
        assert knee1 < knee5

    def test_fixture_documents_the_reference_knee(self):
        ref = fixture.workloads_entry()["reference_knee"]
        tool = builtin_tools()[ref["tool"]]
        plan = plan_for(tool, 1, storage=ref["storage_nodes"],
                        units=ref["data_units"])
        assert knee_vcpus(plan) == ref["knee_vcpus"]

    def test_within_band_up_to_knee_then_sublinear(self):
        ref = fixture.workloads_entry()["reference_knee"]
        tool = builtin_tools()[ref["tool"]]
        knee = ref["knee_vcpus"]
        cluster = big_cluster(vcpus=8 * (knee // 8 + 4))
        plan = plan_for(tool, 1, storage=ref["storage_nodes"],
                        units=ref["data_units"])
        below = speedup_series(plan, cluster, [2, knee // 2, knee])
        for result in below:
            assert result.speedup >= 0.9 * result.vcpus
        above = speedup_series(plan, cluster, [knee + 1, knee + 10])
        for result in above:
            assert result.speedup < 0.9 * result.vcpus
            assert result.speedup < result.vcpus


class TestWeakScaling:
    def test_baseline_wse_is_exactly_one(self):
        cluster = big_cluster()
        tool = builtin_tools()["ffm-like"]
        results = wse_series(plan_for(tool, 1, units=250.0), cluster,
                             [10, 20, 30, 40], n_base=10)
        assert results[0].wse == 1.0

    def test_full_width_wse_matches_reference(self):
        cluster = big_cluster()
        tool = builtin_tools()["ffm-like"]
        results = wse_series(plan_for(tool, 1, units=250.0), cluster,
                             [10, 20, 30, 40], n_base=10)
        assert 0.78 <= results[-1].wse <= 0.88

    def test_wse_monotone_non_increasing(self):
        cluster = big_cluster()
        tool = builtin_tools()["csi-like"]
        results = wse_series(plan_for(tool, 1, units=250.0), cluster,
                             [10, 20, 30, 40], n_base=10)
        wses = [r.wse for r in results]
        assert wses == sorted(wses, reverse=True)

    def test_zero_gamma_means_perfect_weak_scaling(self):
        cluster = big_cluster()
        tool = builtin_tools()["batman-like"]
        results = wse_series(plan_for(tool, 1, units=250.0, gamma=0.0), cluster,
                             [10, 20, 30, 40], n_base=10)
        assert all(r.wse == 1.0 for r in results)

    def test_baseline_must_be_in_list(self):
        cluster = big_cluster()
        tool = builtin_tools()["ffm-like"]
        with pytest.raises(ValidationError, match="baseline"):
            wse_series(plan_for(tool, 1), cluster, [20, 40], n_base=10)

    def test_gamma_comes_from_fixture(self):
        expected = (1.0 / 0.83 - 1.0) / 30.0
        assert default_gamma() == pytest.approx(expected, rel=1e-12)


class TestOracle:
    @pytest.mark.parametrize("n", [1, 2, 3, 4, 8])
    def test_event_simulation_matches_closed_form(self, n):
        cluster = big_cluster()
        for tool in builtin_tools().values():
            plan = plan_for(tool, n)
            assert simulate_run(plan, cluster) == pytest.approx(
                model_time(plan), rel=1e-12)

    @pytest.mark.parametrize("n", [2, 4, 8])
    def test_oracle_handles_weak_mode_core(self, n):
        cluster = big_cluster()
        tool = builtin_tools()["csi-like"]
        plan = RunPlan(tool=tool, data_units=25.0 * n, partitions=n, mode="weak",
                       storage_nodes_used=3, per_storage_bw_mbps=500.0,
                       baseline_partitions=2, gamma=0.0)
        assert simulate_run(plan, cluster) == pytest.approx(
            model_time(plan), rel=1e-12)

    def test_oracle_schedules_through_the_cluster(self):
        tight = synthetic_cluster(service_nodes=1, vcpus_per_node=2)
        tool = builtin_tools()["batman-like"]
        with pytest.raises(OrchestratorError):
            simulate_run(plan_for(tool, 8), tight)

    @settings(max_examples=30, deadline=None)
    @given(
        n=st.integers(1, 8),
        cpu=st.floats(0.1, 5.0),
        io=st.floats(0, 5e5),
        overhead=st.floats(0, 10.0),
    )
    def test_oracle_equivalence_property(self, n, cpu, io, overhead):
        cluster = big_cluster()
        tool = ToolProfile("fuzz", cpu, io, overhead)
        plan = plan_for(tool, n)
        assert simulate_run(plan, cluster) == pytest.approx(
            model_time(plan), rel=1e-9)


class TestValidation:
    def test_capacity_shortfall(self):
        small = synthetic_cluster(service_nodes=1, vcpus_per_node=2)
        tool = builtin_tools()["batman-like"]
        with pytest.raises(OrchestratorError, match="capacity shortfall"):
            run(plan_for(tool, 64), small)

    def test_storage_nodes_bounded_by_deployment(self):
        cluster = synthetic_cluster(service_nodes=4, vcpus_per_node=8,
                                    storage_nodes=1)
        tool = builtin_tools()["csi-like"]
        with pytest.raises(ValidationError, match="storage_nodes_used"):
            run(plan_for(tool, 4, storage=5), cluster)

    def test_io_without_storage_rejected(self):
        tool = builtin_tools()["csi-like"]
        with pytest.raises(ValidationError, match="zero storage"):
            plan_for(tool, 4, storage=0)

    def test_results_csv_blank_fields(self):
        cluster = big_cluster()
        tool = builtin_tools()["ffm-like"]
        strong = results_csv(speedup_series(plan_for(tool, 1), cluster, [4]),
                             "ffm-like", "strong")
        lines = strong.strip().split("\n")
        assert lines[0] == "tool,mode,vcpus,t_seconds,speedup,wse"
        assert lines[1].endswith(",")  # wse column empty in strong mode
        weak = results_csv(
            wse_series(plan_for(tool, 1, units=250.0), cluster, [10], n_base=10),
            "ffm-like", "weak")
        row = weak.strip().split("\n")[1].split(",")
        assert row[4] == "" and row[5] != ""
