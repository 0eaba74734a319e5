"""Strategy search: enumerate feasible parallelizations, rank static and mixed
(prefill/decode) plans by the analytic model, and run sensitivity sweeps.

The objective is seconds per request: one prefill completion plus output_len
decode steps, both evaluated at the achievable resident batch (memory-bound,
capped by the workload size), plus (for mixed plans) re-shard time amortized
over the requests that flow through each buffer-fill cycle. Static pairs live
inside the mixed search space with zero amortization, so the best mixed
objective can never exceed the best static.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

from . import perf
from .perf import Mode, Phase
from .reshard import weight_reload_plan
from .sim import SchedulingPolicy, SimOptions, simulate
from .specs import (
    HardwareSpec,
    ModelSpec,
    ParallelismConfig,
    kv_bytes_per_token,
    max_batch_size,
    validate_config,
)
from .workload import gen_trace


class NoFeasiblePlanError(ValueError):
    """No configuration can host the model, or none admits a single request."""


@dataclass(frozen=True)
class WorkloadSummary:
    """Representative lengths the analytic planner optimizes for."""

    input_len: int
    output_len: int
    count: int

    @property
    def full_len(self) -> int:
        return self.input_len + self.output_len

    @property
    def decode_context(self) -> float:
        # Representative decode context: the mean of a context growing from
        # input_len to input_len + output_len.
        return self.input_len + self.output_len / 2.0


@dataclass(frozen=True)
class StrategyPlan:
    cfg_p: ParallelismConfig
    cfg_d: ParallelismConfig
    predicted_inverse_throughput: float
    reshard_amortization: float
    simulated_tokens_per_second: float | None = None

    @property
    def is_static(self) -> bool:
        return self.cfg_p == self.cfg_d

    def as_dict(self) -> dict:
        return {
            "cfg_p": self.cfg_p.label(),
            "cfg_d": self.cfg_d.label(),
            "predicted_inverse_throughput_s": self.predicted_inverse_throughput,
            "reshard_amortization_s": self.reshard_amortization,
            "simulated_tokens_per_second": self.simulated_tokens_per_second,
        }


def enumerate_configs(model: ModelSpec, hw: HardwareSpec) -> list[ParallelismConfig]:
    """All feasible (tp, pp, dp) covering the fleet, lexicographic by tp, pp, dp."""
    configs = []
    n = hw.num_gpus
    for tp in range(1, n + 1):
        if n % tp:
            continue
        for pp in range(1, n // tp + 1):
            if (n // tp) % pp:
                continue
            cfg = ParallelismConfig(tp=tp, pp=pp, dp=n // (tp * pp))
            if validate_config(model, hw, cfg):
                configs.append(cfg)
    return configs


def _phase_costs(
    model: ModelSpec,
    hw: HardwareSpec,
    cfg: ParallelismConfig,
    summary: WorkloadSummary,
    mode: Mode,
) -> tuple[float, float] | None:
    """(prefill seconds/request, decode seconds/request) at the achievable batch, or None."""
    batch = max_batch_size(model, hw, cfg, summary.full_len)
    if batch < 1:
        return None
    batch = min(batch, summary.count)
    prefill = perf.throughput_inverse(model, hw, cfg, batch, summary.input_len, Phase.PREFILL, mode)
    decode_step = perf.throughput_inverse(
        model, hw, cfg, batch, summary.decode_context, Phase.DECODE, mode
    )
    return prefill, summary.output_len * decode_step


def _amortization(
    model: ModelSpec,
    hw: HardwareSpec,
    cfg_p: ParallelismConfig,
    cfg_d: ParallelismConfig,
    summary: WorkloadSummary,
) -> float:
    """Re-shard seconds per request across the buffer-fill cycles of a run."""
    if cfg_p == cfg_d:
        return 0.0
    reload_d = weight_reload_plan(model, hw, cfg_p, cfg_d).wall_time
    reload_p = weight_reload_plan(model, hw, cfg_d, cfg_p).wall_time
    total_kv = summary.count * summary.full_len * kv_bytes_per_token(model)
    cycles = max(1, math.ceil(total_kv / hw.cpu_kv_capacity))
    return cycles * (reload_p + reload_d) / summary.count


def plan_objective(
    model: ModelSpec,
    hw: HardwareSpec,
    cfg_p: ParallelismConfig,
    cfg_d: ParallelismConfig,
    summary: WorkloadSummary,
    mode: Mode = Mode.ROOFLINE,
) -> StrategyPlan | None:
    """Analytic seconds/request for a (cfg_p, cfg_d) pair; None if unusable."""
    p_costs = _phase_costs(model, hw, cfg_p, summary, mode)
    d_costs = _phase_costs(model, hw, cfg_d, summary, mode)
    if p_costs is None or d_costs is None:
        return None
    amort = _amortization(model, hw, cfg_p, cfg_d, summary)
    return StrategyPlan(
        cfg_p=cfg_p,
        cfg_d=cfg_d,
        predicted_inverse_throughput=p_costs[0] + d_costs[1] + amort,
        reshard_amortization=amort,
    )


def _better(candidate: StrategyPlan, best: StrategyPlan | None) -> bool:
    if best is None:
        return True
    if candidate.predicted_inverse_throughput != best.predicted_inverse_throughput:
        return candidate.predicted_inverse_throughput < best.predicted_inverse_throughput
    # Ties break toward larger tp, then smaller pp (decode config first).
    key = lambda p: (-p.cfg_d.tp, p.cfg_d.pp, -p.cfg_p.tp, p.cfg_p.pp)
    return key(candidate) < key(best)


def best_static(
    model: ModelSpec,
    hw: HardwareSpec,
    summary: WorkloadSummary,
    mode: Mode = Mode.ROOFLINE,
) -> StrategyPlan:
    """Best single configuration used unchanged for both stages."""
    best: StrategyPlan | None = None
    for cfg in enumerate_configs(model, hw):
        plan = plan_objective(model, hw, cfg, cfg, summary, mode)
        if plan is not None and _better(plan, best):
            best = plan
    if best is None:
        raise NoFeasiblePlanError("no feasible configuration admits even one request")
    return best


def best_mixed(
    model: ModelSpec,
    hw: HardwareSpec,
    summary: WorkloadSummary,
    mode: Mode = Mode.ROOFLINE,
) -> StrategyPlan:
    """Best (cfg_p, cfg_d) pair with equal dp; never worse than best_static."""
    configs = enumerate_configs(model, hw)
    best: StrategyPlan | None = None
    for cfg_p in configs:
        for cfg_d in configs:
            if cfg_p.dp != cfg_d.dp:
                continue
            plan = plan_objective(model, hw, cfg_p, cfg_d, summary, mode)
            if plan is not None and _better(plan, best):
                best = plan
    if best is None:
        raise NoFeasiblePlanError("no feasible configuration admits even one request")
    return best


def confirm_by_simulation(
    model: ModelSpec,
    hw: HardwareSpec,
    plan: StrategyPlan,
    summary: WorkloadSummary,
    options: SimOptions | None = None,
) -> StrategyPlan:
    """Simulate the plan on a uniform workload and attach measured tokens/s."""
    trace = gen_trace("constant", summary.count, summary.input_len, summary.output_len)
    report = simulate(
        model,
        hw,
        trace.requests,
        SchedulingPolicy.TRANSITION_MINIMIZING,
        plan.cfg_p,
        plan.cfg_d,
        options or SimOptions(),
    )
    return replace(plan, simulated_tokens_per_second=report.tokens_per_second)


SWEEP_CSV_HEADER = (
    "axis_value,static_tp,static_pp,static_dp,static_obj_s,"
    "mixed_tp_p,mixed_pp_p,mixed_tp_d,mixed_pp_d,mixed_obj_s"
)


@dataclass(frozen=True)
class SweepRow:
    axis_value: float
    static: StrategyPlan
    mixed: StrategyPlan

    def csv(self) -> str:
        s, m = self.static, self.mixed
        return (
            f"{self.axis_value},{s.cfg_p.tp},{s.cfg_p.pp},{s.cfg_p.dp},"
            f"{s.predicted_inverse_throughput!r},"
            f"{m.cfg_p.tp},{m.cfg_p.pp},{m.cfg_d.tp},{m.cfg_d.pp},"
            f"{m.predicted_inverse_throughput!r}"
        )


def sweep(
    model: ModelSpec,
    hw: HardwareSpec,
    summary: WorkloadSummary,
    axis: str,
    grid: list[float],
    mode: Mode = Mode.ROOFLINE,
) -> list[SweepRow]:
    """Best static and mixed plans along an axis.

    'allreduce_scale' multiplies only the all-reduce bandwidth model;
    'pd_ratio' varies output_len as round(ratio * input_len) at fixed input.
    Rows are independent and emitted in grid order.
    """
    if not grid:
        raise ValueError("sweep grid must be non-empty")
    if any(v <= 0 for v in grid):
        raise ValueError("sweep grid values must be positive")
    rows = []
    for value in grid:
        if axis == "allreduce_scale":
            hw_v, summary_v = hw.with_allreduce_scale(value), summary
        elif axis == "pd_ratio":
            out = max(1, round(value * summary.input_len))
            hw_v, summary_v = hw, replace(summary, output_len=out)
        else:
            raise ValueError(f"unknown sweep axis {axis!r}")
        rows.append(
            SweepRow(
                axis_value=value,
                static=best_static(model, hw_v, summary_v, mode),
                mixed=best_mixed(model, hw_v, summary_v, mode),
            )
        )
    return rows


def sweep_csv(rows: list[SweepRow]) -> str:
    return "\n".join([SWEEP_CSV_HEADER] + [row.csv() for row in rows]) + "\n"
