"""Cost model and deterministic simulator for throughput-oriented multi-GPU
LLM inference with stage-specific parallelization and dynamic re-sharding."""

from .optimize import StrategyPlan, WorkloadSummary, best_mixed, best_static, sweep
from .perf import CostBreakdown, Mode, Phase
from .sim import (
    Event,
    ReplayVerdict,
    SchedulingPolicy,
    SimOptions,
    SimReport,
    SimulationError,
    TieredKVState,
    replay_check,
    simulate,
)
from .workload import WorkloadTrace, gen_trace, parse_trace, write_trace
from .specs import (
    AllReduceTable,
    ConfigError,
    Feasibility,
    HardwareSpec,
    InfeasibleConfigError,
    KVLayout,
    ModelSpec,
    ParallelismConfig,
    Request,
    RingAllReduce,
    kv_bytes_per_token,
    load_hardware_spec,
    load_model_spec,
    max_batch_size,
    total_weight_bytes,
    validate_config,
)

__all__ = [
    "AllReduceTable",
    "ConfigError",
    "CostBreakdown",
    "Event",
    "Feasibility",
    "HardwareSpec",
    "InfeasibleConfigError",
    "KVLayout",
    "Mode",
    "ModelSpec",
    "ParallelismConfig",
    "Phase",
    "ReplayVerdict",
    "Request",
    "RingAllReduce",
    "SchedulingPolicy",
    "SimOptions",
    "SimReport",
    "SimulationError",
    "StrategyPlan",
    "TieredKVState",
    "WorkloadSummary",
    "WorkloadTrace",
    "best_mixed",
    "best_static",
    "gen_trace",
    "kv_bytes_per_token",
    "load_hardware_spec",
    "load_model_spec",
    "max_batch_size",
    "parse_trace",
    "replay_check",
    "simulate",
    "sweep",
    "total_weight_bytes",
    "validate_config",
    "write_trace",
]

__version__ = "0.1.0"
