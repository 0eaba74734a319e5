"""Shard maps for weights and KV cache, transfer plans for switching
parallelization configs, and KV layout contiguity metrics.

Placement is canonical and deterministic: layers are blocked in order across
pipeline stages, KV heads in order across tensor ranks, and replicas are
identical up to replica_id. GPU ids enumerate replica-major, then stage, then
tensor rank.
"""

from __future__ import annotations

from dataclasses import dataclass

from .specs import (
    ConfigError,
    HardwareSpec,
    KVLayout,
    ModelSpec,
    ParallelismConfig,
)


@dataclass(frozen=True)
class GpuShard:
    """One GPU's slice of a replica: a layer range, a KV head range, weight bytes."""

    gpu_id: int
    replica_id: int
    layer_begin: int
    layer_end: int
    kv_head_begin: int
    kv_head_end: int
    weight_bytes: int


@dataclass(frozen=True)
class ShardMap:
    cfg: ParallelismConfig
    shards: tuple[GpuShard, ...]

    def replica(self, replica_id: int) -> tuple[GpuShard, ...]:
        return tuple(s for s in self.shards if s.replica_id == replica_id)

    def table(self) -> str:
        """Human-readable per-GPU rows for CLI inspection."""
        lines = ["gpu_id  replica  layers        kv_heads      weight_bytes"]
        for s in self.shards:
            layers = f"[{s.layer_begin},{s.layer_end})"
            heads = f"[{s.kv_head_begin},{s.kv_head_end})"
            lines.append(f"{s.gpu_id:<7d} {s.replica_id:<8d} {layers:<13s} {heads:<13s} {s.weight_bytes}")
        return "\n".join(lines)


@dataclass(frozen=True)
class TransferPlan:
    """Weight bytes each GPU loads from host memory when switching configs.

    KV movement is not charged here: it is realized through the host KV tier
    during swapping, so the simulator's swap pipeline owns that cost.
    """

    bytes_per_gpu: tuple[int, ...]
    wall_time: float
    kv_note: str = "kv re-sharding rides the host-tier swap path; not charged in this plan"

    @property
    def total_bytes(self) -> int:
        return sum(self.bytes_per_gpu)


@dataclass(frozen=True)
class KVShardDesc:
    """One GPU's slice of a single sequence's KV cache."""

    gpu_id: int
    layer_begin: int
    layer_end: int
    kv_head_begin: int
    kv_head_end: int
    bytes: int


@dataclass(frozen=True)
class KVRoute:
    """Swap-out descriptors under the prefill config, swap-in under the decode config."""

    swap_out: tuple[KVShardDesc, ...]
    swap_in: tuple[KVShardDesc, ...]


def _require_valid(model: ModelSpec, cfg: ParallelismConfig) -> None:
    if model.num_layers % cfg.pp != 0:
        raise ConfigError(f"pp={cfg.pp} does not divide num_layers={model.num_layers}")
    if model.num_kv_heads % cfg.tp != 0:
        raise ConfigError(f"tp={cfg.tp} does not divide num_kv_heads={model.num_kv_heads}")


def shard_map(model: ModelSpec, cfg: ParallelismConfig) -> ShardMap:
    """Canonical blocked assignment of layers, KV heads, and weight bytes."""
    _require_valid(model, cfg)
    layers_per_stage = model.num_layers // cfg.pp
    heads_per_rank = model.num_kv_heads // cfg.tp
    stage_bytes = layers_per_stage * model.params_per_layer * model.bytes_per_param
    base, extra = divmod(stage_bytes, cfg.tp)
    shards = []
    gpu_id = 0
    for replica in range(cfg.dp):
        for stage in range(cfg.pp):
            for rank in range(cfg.tp):
                shards.append(
                    GpuShard(
                        gpu_id=gpu_id,
                        replica_id=replica,
                        layer_begin=stage * layers_per_stage,
                        layer_end=(stage + 1) * layers_per_stage,
                        kv_head_begin=rank * heads_per_rank,
                        kv_head_end=(rank + 1) * heads_per_rank,
                        weight_bytes=base + (1 if rank < extra else 0),
                    )
                )
                gpu_id += 1
    return ShardMap(cfg=cfg, shards=tuple(shards))


def weight_reload_plan(
    model: ModelSpec,
    hw: HardwareSpec,
    cfg_old: ParallelismConfig,
    cfg_new: ParallelismConfig,
) -> TransferPlan:
    """Cost of re-sharding weights: every GPU reloads its full new shard from host.

    All GPUs transfer in parallel over independent host links, so the wall time
    is the largest per-GPU load divided by the link bandwidth. Data parallelism
    is never adjusted dynamically; a dp change is an unsupported transition.
    """
    if cfg_old.dp != cfg_new.dp:
        raise ConfigError(
            f"unsupported transition: dp may not change ({cfg_old.dp} -> {cfg_new.dp})"
        )
    for cfg in (cfg_old, cfg_new):
        _require_valid(model, cfg)
    if cfg_old == cfg_new:
        return TransferPlan(bytes_per_gpu=tuple(0 for _ in range(cfg_new.num_gpus)), wall_time=0.0)
    new_map = shard_map(model, cfg_new)
    per_gpu = tuple(s.weight_bytes for s in new_map.shards)
    wall = max(per_gpu) / hw.host_link_bandwidth
    return TransferPlan(bytes_per_gpu=per_gpu, wall_time=wall)


def _kv_shards(model: ModelSpec, cfg: ParallelismConfig, seq_len: int) -> tuple[KVShardDesc, ...]:
    per_cell = 2 * model.bytes_per_param * model.head_dim  # K+V bytes per (layer, head, token)
    descs = []
    for shard in shard_map(model, ParallelismConfig(cfg.tp, cfg.pp, 1)).shards:
        n_layers = shard.layer_end - shard.layer_begin
        n_heads = shard.kv_head_end - shard.kv_head_begin
        descs.append(
            KVShardDesc(
                gpu_id=shard.gpu_id,
                layer_begin=shard.layer_begin,
                layer_end=shard.layer_end,
                kv_head_begin=shard.kv_head_begin,
                kv_head_end=shard.kv_head_end,
                bytes=n_layers * n_heads * seq_len * per_cell,
            )
        )
    return tuple(descs)


def kv_reshard_route(
    model: ModelSpec,
    cfg_p: ParallelismConfig,
    cfg_d: ParallelismConfig,
    seq_len: int,
) -> KVRoute:
    """Per-GPU KV shard descriptors for one sequence crossing a config switch.

    Swap-out partitions the sequence's KV by the prefill config's
    (layer range x head range) blocks; swap-in by the decode config's. Either
    side reconstructs the full KV exactly once. Routing is within one replica;
    replicas are identical.
    """
    if seq_len < 1:
        raise ValueError("seq_len must be >= 1")
    return KVRoute(
        swap_out=_kv_shards(model, cfg_p, seq_len),
        swap_in=_kv_shards(model, cfg_d, seq_len),
    )


def contiguous_runs(layout: KVLayout, seq_len: int, h_kv: int, tp: int) -> int:
    """Contiguous memory runs per (layer, sequence) KV shard under head sharding.

    A head-range slice of the leading axis (HND) is one run; slicing the middle
    axis (NHD) splits into one run per token position whenever tp > 1.
    """
    if h_kv % tp != 0:
        raise ConfigError(f"tp={tp} does not divide h_kv={h_kv}")
    if layout is KVLayout.HND:
        return 1
    return seq_len if tp > 1 else 1
