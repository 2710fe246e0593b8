"""tiersim: a deterministic two-tier memory simulator and QoS policy engine."""

from .engine import (MetricsRow, PerfModel, RunSummary, Simulation,
                     run_scenario)
from .hotness import HotnessBins, PageRecord, Tier
from .memmgr import MigrationLedger, ProcessKilled, TierState
from .policy import (MigrationPlan, QosPolicy, ReallocationPlan,
                     baseline_noqos, baseline_static, plan_migrations,
                     plan_reallocation)
from .telemetry import (AccessSampler, ProcessQoSState, SamplerConfig,
                        epoch_fmmr, update_ewma)
from .workload import (AccessPattern, HotSetPattern, HotWarmPattern,
                       ScenarioError, ScenarioScript, UniformPattern,
                       ZipfPattern, parse_scenario)

__version__ = "0.1.0"

__all__ = [
    "AccessPattern", "AccessSampler", "HotSetPattern", "HotWarmPattern",
    "HotnessBins", "MetricsRow", "MigrationLedger", "MigrationPlan",
    "PageRecord", "PerfModel", "ProcessKilled", "ProcessQoSState",
    "QosPolicy", "ReallocationPlan", "RunSummary", "SamplerConfig",
    "ScenarioError", "ScenarioScript", "Simulation", "Tier", "TierState",
    "UniformPattern", "ZipfPattern", "baseline_noqos", "baseline_static",
    "epoch_fmmr", "parse_scenario", "plan_migrations", "plan_reallocation",
    "run_scenario", "update_ewma",
]
