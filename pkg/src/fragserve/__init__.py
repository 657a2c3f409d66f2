"""Shared serving of partitioned model fragments under latency SLOs.

Clients run a model prefix on-device and offload the suffix. The planners
here decide how those server-side fragments are merged, grouped, and
re-partitioned so common suffixes run once per batch, and price the result
in GPU share. The simulator replays a scenario against any planner.
"""
from .allocation import NULL_ALLOC, AllocConfig, AllocCurve, achievable_rps, min_resource
from .errors import FragserveError, InfeasibleError, ProfileParseError, ValidationError
from .grouping import GroupingConfig, group_fragments, grouping_cost
from .kernels import BACKEND
from .merging import MergeConfig, merge_fragments, resource_margin
from .placement import pack, place_plan
from .planners import (
    PLANNERS,
    plan_independent,
    plan_merged,
    plan_optimal,
    plan_realigned,
    plan_static,
)
from .profiles import (
    CostModel,
    DeviceProfile,
    LayerSpec,
    ModelSpec,
    ParetoFrontier,
    SyntheticCostModel,
    TableCostModel,
    load_device_profile,
    load_model_spec,
    load_profiles,
    pareto_frontier,
    throughput,
)
from .realign import (
    ExecutionPlan,
    GroupPlan,
    Level,
    RealignConfig,
    StagePlan,
    budget_grid,
    realign,
)
from .scenario import Scenario, load_scenario
from .simulator import SimConfig, SimReport, plan_id, plan_to_dict, simulate
from .workload import (
    BandwidthTrace,
    ClientSpec,
    EpochWorkload,
    Fragment,
    average_mbps,
    bandwidth_at,
    generate_epoch,
    load_trace,
    partition_client,
    transfer_ms,
)

__version__ = "0.1.0"

__all__ = [
    "AllocConfig", "AllocCurve", "NULL_ALLOC", "achievable_rps", "min_resource",
    "BACKEND",
    "BandwidthTrace", "ClientSpec", "EpochWorkload", "Fragment",
    "average_mbps", "bandwidth_at", "generate_epoch", "load_trace",
    "partition_client", "transfer_ms",
    "CostModel", "DeviceProfile", "LayerSpec", "ModelSpec", "ParetoFrontier",
    "SyntheticCostModel", "TableCostModel", "load_device_profile",
    "load_model_spec", "load_profiles", "pareto_frontier", "throughput",
    "FragserveError", "InfeasibleError", "ProfileParseError", "ValidationError",
    "GroupingConfig", "group_fragments", "grouping_cost",
    "MergeConfig", "merge_fragments", "resource_margin",
    "ExecutionPlan", "GroupPlan", "Level", "RealignConfig", "StagePlan",
    "budget_grid", "realign",
    "pack", "place_plan",
    "PLANNERS", "plan_independent", "plan_merged", "plan_optimal",
    "plan_realigned", "plan_static",
    "Scenario", "load_scenario",
    "SimConfig", "SimReport", "plan_id", "plan_to_dict", "simulate",
    "__version__",
]
