"""Analytical runtime model: per-layer component times, roofline/additive
composition, pipeline stage time, and inverse throughput.

Per-layer time decomposes into weight traffic, KV traffic, linear compute,
attention compute, and all-reduce communication. Batch arguments are
micro-batches (per forward pass on one device) and may be fractional in the
closed-form model; the simulator passes integer micro-batches.

The attention FLOP counts (b*h_q*s^2*d^2 prefill, 2*b*h_q*s*d^2 decode) use an
unconventional d^2 factor; they are kept as-is so the model stays consistent
with the calibration it was derived from.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Sequence

from .specs import HardwareSpec, ModelSpec, ParallelismConfig


class Phase(Enum):
    PREFILL = "prefill"
    DECODE = "decode"


class Mode(Enum):
    """Composition rule for the five per-layer components."""

    ROOFLINE = "roofline"
    ADDITIVE = "additive"


@dataclass(frozen=True)
class CostBreakdown:
    """The five per-layer time components plus their composition, seconds."""

    t_dm_linear: float
    t_dm_attn: float
    t_comp_linear: float
    t_comp_attn: float
    t_comm: float
    layer_time: float
    mode: Mode

    def as_dict(self) -> dict[str, float | str]:
        return {
            "t_dm_linear": self.t_dm_linear,
            "t_dm_attn": self.t_dm_attn,
            "t_comp_linear": self.t_comp_linear,
            "t_comp_attn": self.t_comp_attn,
            "t_comm": self.t_comm,
            "layer_time": self.layer_time,
            "mode": self.mode.value,
        }


def linear_dm_time(model: ModelSpec, hw: HardwareSpec, cfg: ParallelismConfig) -> float:
    """Weight traffic per layer: bytes_per_param*W / (B_HBM * tp).

    Only tensor parallelism shards the weights; data parallelism duplicates
    them and pipeline parallelism is accounted at stage level via L/pp.
    """
    return model.bytes_per_param * model.params_per_layer / (hw.hbm_bandwidth * cfg.tp)


def attn_dm_time(
    model: ModelSpec,
    hw: HardwareSpec,
    cfg: ParallelismConfig,
    batch: float,
    seq_len: float,
    phase: Phase,
) -> float:
    """KV/QKV traffic per layer for a micro-batch of `batch` sequences."""
    if batch <= 0:
        return 0.0
    if phase is Phase.PREFILL:
        volume = (
            model.bytes_per_param
            * batch
            * seq_len
            * (model.num_query_heads + 2 * model.num_kv_heads)
            * model.head_dim
        )
    else:
        volume = 2 * model.bytes_per_param * batch * seq_len * model.num_kv_heads * model.head_dim
    return volume / (hw.hbm_bandwidth * cfg.tp)


def compute_time(
    model: ModelSpec,
    hw: HardwareSpec,
    cfg: ParallelismConfig,
    batch: float,
    seq_len: float,
    phase: Phase,
) -> tuple[float, float]:
    """(linear, attention) compute seconds per layer for a micro-batch."""
    if batch <= 0:
        return 0.0, 0.0
    d2 = model.head_dim * model.head_dim
    if phase is Phase.PREFILL:
        linear_flops = 2.0 * model.params_per_layer * batch * seq_len
        attn_flops = batch * model.num_query_heads * seq_len * seq_len * d2
    else:
        linear_flops = 2.0 * model.params_per_layer * batch
        attn_flops = 2.0 * batch * model.num_query_heads * seq_len * d2
    scale = hw.peak_flops * cfg.tp
    return linear_flops / scale, attn_flops / scale


def allreduce_time(model: ModelSpec, hw: HardwareSpec, cfg: ParallelismConfig, tokens: float) -> float:
    """All-reduce seconds per layer for `tokens` micro-batch tokens on one device.

    Zero when tp == 1. Token count is b*s in prefill and b in decode.
    """
    if cfg.tp == 1 or tokens <= 0:
        return 0.0
    volume = tokens * model.activation_bytes_per_token * model.allreduces_per_layer
    return volume / hw.allreduce_bandwidth(cfg.tp)


def _compose(
    dm_linear: float,
    dm_attn: float,
    comp_linear: float,
    comp_attn: float,
    comm: float,
    mode: Mode,
) -> CostBreakdown:
    if mode is Mode.ROOFLINE:
        total = max(dm_linear, comp_linear) + max(dm_attn, comp_attn) + comm
    else:
        total = dm_linear + comp_linear + dm_attn + comp_attn + comm
    return CostBreakdown(dm_linear, dm_attn, comp_linear, comp_attn, comm, total, mode)


def layer_time(
    model: ModelSpec,
    hw: HardwareSpec,
    cfg: ParallelismConfig,
    batch: float,
    seq_len: float,
    phase: Phase,
    mode: Mode = Mode.ROOFLINE,
) -> CostBreakdown:
    """Per-layer cost of one micro-batch forward pass."""
    dm_linear = linear_dm_time(model, hw, cfg)
    dm_attn = attn_dm_time(model, hw, cfg, batch, seq_len, phase)
    comp_linear, comp_attn = compute_time(model, hw, cfg, batch, seq_len, phase)
    tokens = batch * seq_len if phase is Phase.PREFILL else batch
    comm = allreduce_time(model, hw, cfg, tokens)
    return _compose(dm_linear, dm_attn, comp_linear, comp_attn, comm, mode)


def layer_time_batch(
    model: ModelSpec,
    hw: HardwareSpec,
    cfg: ParallelismConfig,
    seq_lens: Sequence[int],
    phase: Phase,
    mode: Mode = Mode.ROOFLINE,
) -> CostBreakdown:
    """Per-layer cost of a micro-batch with explicit per-sequence lengths.

    Batch-proportional components sum over the sequences; the weight traffic
    term is charged once. Equivalent to layer_time(len(seq_lens), s) when all
    lengths equal s.
    """
    dm_linear = linear_dm_time(model, hw, cfg)
    dm_attn = 0.0
    comp_linear = 0.0
    comp_attn = 0.0
    tokens = 0.0
    for s in seq_lens:
        dm_attn += attn_dm_time(model, hw, cfg, 1, s, phase)
        lin, attn = compute_time(model, hw, cfg, 1, s, phase)
        comp_linear += lin
        comp_attn += attn
        tokens += s if phase is Phase.PREFILL else 1
    comm = allreduce_time(model, hw, cfg, tokens)
    return _compose(dm_linear, dm_attn, comp_linear, comp_attn, comm, mode)


def stage_quantum(
    model: ModelSpec,
    hw: HardwareSpec,
    cfg: ParallelismConfig,
    micro_batch: float,
    seq_len: float,
    phase: Phase,
    mode: Mode = Mode.ROOFLINE,
) -> float:
    """Steady-state time between successive micro-batch completions: (L/pp)*layer."""
    cost = layer_time(model, hw, cfg, micro_batch, seq_len, phase, mode)
    return model.num_layers / cfg.pp * cost.layer_time


def stage_time(
    model: ModelSpec,
    hw: HardwareSpec,
    cfg: ParallelismConfig,
    global_batch: float,
    seq_len: float,
    phase: Phase,
    mode: Mode = Mode.ROOFLINE,
) -> float:
    """Time for the last pipeline stage to finish one micro-batch.

    The global batch splits into pp*dp micro-batches (fractional allowed in the
    closed form). Peer-to-peer pipeline transfers are not charged here.
    """
    if global_batch < 0:
        raise ValueError("global_batch must be non-negative")
    micro = global_batch / (cfg.pp * cfg.dp)
    return stage_quantum(model, hw, cfg, micro, seq_len, phase, mode)


def throughput_inverse(
    model: ModelSpec,
    hw: HardwareSpec,
    cfg: ParallelismConfig,
    global_batch: float,
    seq_len: float,
    phase: Phase,
    mode: Mode = Mode.ROOFLINE,
) -> float:
    """Seconds per request at steady state: stage_time / (global_batch / pp).

    One stage completion finishes b/pp requests per replica across dp replicas.
    """
    if global_batch <= 0:
        raise ValueError("global_batch must be >= 1")
    return stage_time(model, hw, cfg, global_batch, seq_len, phase, mode) / (global_batch / cfg.pp)
