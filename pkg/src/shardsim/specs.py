"""Domain types and closed-form capacity formulas shared by every other module.

All sizes are bytes, all rates bytes/second or flop/second, all lengths tokens.
Types are immutable after construction; every operation here is a pure function.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Any, Mapping

import yaml


class ConfigError(ValueError):
    """A spec document or parallelism configuration is malformed."""


class InfeasibleConfigError(ConfigError):
    """A parallelism configuration cannot host the model on the fleet."""


class KVLayout(Enum):
    """Axis order of the cached K/V tensors.

    NHD is (seq_len, heads, head_dim); HND is (heads, seq_len, head_dim).
    Head-sharded transfers are contiguous only under HND.
    """

    NHD = "nhd"
    HND = "hnd"


@dataclass(frozen=True)
class ModelSpec:
    """Transformer architecture constants that parameterize every cost formula."""

    num_layers: int
    params_per_layer: int
    num_query_heads: int
    num_kv_heads: int
    head_dim: int
    bytes_per_param: int = 2
    # Bytes all-reduced per token per layer; defaults to one hidden-state
    # vector (bytes_per_param * num_query_heads * head_dim).
    activation_bytes_per_token: int | None = None
    allreduces_per_layer: int = 1

    def __post_init__(self) -> None:
        for name in (
            "num_layers",
            "params_per_layer",
            "num_query_heads",
            "num_kv_heads",
            "head_dim",
            "bytes_per_param",
            "allreduces_per_layer",
        ):
            value = getattr(self, name)
            if not isinstance(value, int) or value <= 0:
                raise ConfigError(f"ModelSpec.{name} must be a positive integer, got {value!r}")
        if self.num_query_heads % self.num_kv_heads != 0:
            raise ConfigError(
                f"num_query_heads ({self.num_query_heads}) must be a multiple of "
                f"num_kv_heads ({self.num_kv_heads})"
            )
        if self.activation_bytes_per_token is None:
            object.__setattr__(
                self,
                "activation_bytes_per_token",
                self.bytes_per_param * self.num_query_heads * self.head_dim,
            )
        elif not isinstance(self.activation_bytes_per_token, int) or self.activation_bytes_per_token <= 0:
            raise ConfigError("activation_bytes_per_token must be a positive integer")


@dataclass(frozen=True)
class RingAllReduce:
    """Ring collective over a point-to-point interconnect.

    Effective bandwidth at degree tp is interconnect_bandwidth * tp / (2*(tp-1)),
    the standard ring volume factor; it is non-increasing in tp by construction.
    """

    interconnect_bandwidth: float

    def __post_init__(self) -> None:
        if self.interconnect_bandwidth <= 0:
            raise ConfigError("interconnect_bandwidth must be positive")

    def bandwidth(self, tp: int) -> float:
        if tp < 2:
            return math.inf
        return self.interconnect_bandwidth * tp / (2.0 * (tp - 1))

    def scaled(self, factor: float) -> "RingAllReduce":
        return RingAllReduce(self.interconnect_bandwidth * factor)


@dataclass(frozen=True)
class AllReduceTable:
    """Measured per-degree all-reduce bandwidths, bytes/second."""

    bandwidths: Mapping[int, float]

    def __post_init__(self) -> None:
        table = {int(k): float(v) for k, v in self.bandwidths.items()}
        if not table:
            raise ConfigError("all-reduce table must not be empty")
        if any(v <= 0 for v in table.values()):
            raise ConfigError("all-reduce bandwidths must be positive")
        degrees = sorted(table)
        for lo, hi in zip(degrees, degrees[1:]):
            if table[hi] > table[lo]:
                raise ConfigError(
                    f"all-reduce bandwidth must be non-increasing in tp: "
                    f"tp={hi} ({table[hi]:.3e}) exceeds tp={lo} ({table[lo]:.3e})"
                )
        object.__setattr__(self, "bandwidths", table)

    def bandwidth(self, tp: int) -> float:
        if tp < 2:
            return math.inf
        try:
            return self.bandwidths[tp]
        except KeyError:
            raise ConfigError(f"all-reduce table has no entry for tp={tp}") from None

    def scaled(self, factor: float) -> "AllReduceTable":
        return AllReduceTable({k: v * factor for k, v in self.bandwidths.items()})


@dataclass(frozen=True)
class HardwareSpec:
    """Per-GPU bandwidths, compute rate, memory capacities, and the all-reduce model."""

    num_gpus: int
    hbm_bandwidth: float
    peak_flops: float
    gpu_memory: float
    host_memory_per_gpu: float
    host_link_bandwidth: float
    allreduce: RingAllReduce | AllReduceTable

    def __post_init__(self) -> None:
        if not isinstance(self.num_gpus, int) or self.num_gpus <= 0:
            raise ConfigError("num_gpus must be a positive integer")
        for name in ("hbm_bandwidth", "peak_flops", "gpu_memory", "host_memory_per_gpu", "host_link_bandwidth"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"HardwareSpec.{name} must be positive")

    def allreduce_bandwidth(self, tp: int) -> float:
        return self.allreduce.bandwidth(tp)

    @property
    def cpu_kv_capacity(self) -> float:
        """Host KV tier capacity contributed by the whole fleet, bytes."""
        return self.host_memory_per_gpu * self.num_gpus

    def with_allreduce_scale(self, factor: float) -> "HardwareSpec":
        """Copy with the all-reduce bandwidth model scaled; host link untouched."""
        if factor <= 0:
            raise ConfigError("all-reduce scale factor must be positive")
        return HardwareSpec(
            num_gpus=self.num_gpus,
            hbm_bandwidth=self.hbm_bandwidth,
            peak_flops=self.peak_flops,
            gpu_memory=self.gpu_memory,
            host_memory_per_gpu=self.host_memory_per_gpu,
            host_link_bandwidth=self.host_link_bandwidth,
            allreduce=self.allreduce.scaled(factor),
        )


@dataclass(frozen=True, order=True)
class ParallelismConfig:
    """A (tp, pp, dp) degree assignment over the GPU fleet."""

    tp: int
    pp: int
    dp: int = 1

    def __post_init__(self) -> None:
        for name in ("tp", "pp", "dp"):
            value = getattr(self, name)
            if not isinstance(value, int) or value <= 0:
                raise ConfigError(f"ParallelismConfig.{name} must be a positive integer")

    @property
    def num_gpus(self) -> int:
        return self.tp * self.pp * self.dp

    @property
    def gpus_per_replica(self) -> int:
        return self.tp * self.pp

    def label(self) -> str:
        return f"tp{self.tp}.pp{self.pp}.dp{self.dp}"

    @classmethod
    def parse(cls, text: str) -> "ParallelismConfig":
        """Parse the CLI form 'tpX.ppY.dpZ' (dp part optional, defaults to 1)."""
        parts = text.strip().lower().split(".")
        degrees = {"dp": 1}
        for part in parts:
            for key in ("tp", "pp", "dp"):
                if part.startswith(key):
                    try:
                        degrees[key] = int(part[len(key):])
                    except ValueError:
                        raise ConfigError(f"bad degree in config string {text!r}") from None
                    break
            else:
                raise ConfigError(f"unrecognized component {part!r} in config string {text!r}")
        if "tp" not in degrees or "pp" not in degrees:
            raise ConfigError(f"config string {text!r} must name tp and pp")
        return cls(tp=degrees["tp"], pp=degrees["pp"], dp=degrees["dp"])


@dataclass(frozen=True)
class Request:
    """One workload unit of an offline trace: prompt length and generation length."""

    id: int | str
    input_len: int
    output_len: int

    def __post_init__(self) -> None:
        if not isinstance(self.input_len, int) or self.input_len < 1:
            raise ConfigError(f"request {self.id!r}: input_len must be >= 1")
        if not isinstance(self.output_len, int) or self.output_len < 1:
            raise ConfigError(f"request {self.id!r}: output_len must be >= 1")


@dataclass(frozen=True)
class Feasibility:
    """Verdict of validate_config; falsy when infeasible, with the violated constraint."""

    feasible: bool
    reason: str = ""

    def __bool__(self) -> bool:
        return self.feasible


def total_weight_bytes(model: ModelSpec) -> int:
    """Total model weight footprint: bytes_per_param * L * W (2LW at fp16)."""
    return model.bytes_per_param * model.num_layers * model.params_per_layer


def kv_bytes_per_token(model: ModelSpec) -> int:
    """KV cache bytes per token across all layers (K and V)."""
    return 2 * model.bytes_per_param * model.num_kv_heads * model.head_dim * model.num_layers


def validate_config(model: ModelSpec, hw: HardwareSpec, cfg: ParallelismConfig) -> Feasibility:
    """Check fleet coverage, sharding divisibility, and per-replica weight fit."""
    if cfg.num_gpus != hw.num_gpus:
        return Feasibility(
            False,
            f"fleet mismatch: tp*pp*dp = {cfg.num_gpus} but fleet has {hw.num_gpus} GPUs",
        )
    if model.num_kv_heads % cfg.tp != 0:
        return Feasibility(
            False,
            f"tp={cfg.tp} does not divide num_kv_heads={model.num_kv_heads}",
        )
    if model.num_layers % cfg.pp != 0:
        return Feasibility(
            False,
            f"pp={cfg.pp} does not divide num_layers={model.num_layers}",
        )
    weights = total_weight_bytes(model)
    replica_memory = hw.gpu_memory * cfg.tp * cfg.pp
    if replica_memory < weights:
        return Feasibility(
            False,
            f"weights do not fit: replica holds {replica_memory:.3e} B "
            f"but weights need {weights:.3e} B",
        )
    return Feasibility(True)


def kv_budget_per_gpu(model: ModelSpec, hw: HardwareSpec, cfg: ParallelismConfig) -> float:
    """Per-GPU memory left for KV cache after the weight shard: M - 2LW/(tp*pp)."""
    return hw.gpu_memory - total_weight_bytes(model) / (cfg.tp * cfg.pp)


def max_batch_size(model: ModelSpec, hw: HardwareSpec, cfg: ParallelismConfig, seq_len: int) -> int:
    """Largest resident batch at context length seq_len.

    Each data-parallel replica independently holds an integer number of
    sequences, so the floor applies per replica and the result is exactly
    linear in dp.
    """
    if seq_len < 1:
        raise ValueError("seq_len must be >= 1")
    verdict = validate_config(model, hw, cfg)
    if not verdict:
        raise InfeasibleConfigError(verdict.reason)
    replica_kv_bytes = hw.gpu_memory * cfg.tp * cfg.pp - total_weight_bytes(model)
    per_replica = math.floor(replica_kv_bytes / (kv_bytes_per_token(model) * seq_len))
    return cfg.dp * max(per_replica, 0)


# -- structured-text loading -------------------------------------------------

_MODEL_KEYS = {
    "num_layers",
    "params_per_layer",
    "bytes_per_param",
    "num_query_heads",
    "num_kv_heads",
    "head_dim",
    "activation_bytes_per_token",
    "allreduces_per_layer",
}

_HW_KEYS = {
    "num_gpus",
    "hbm_bandwidth",
    "peak_flops",
    "gpu_memory",
    "host_memory_per_gpu",
    "host_link_bandwidth",
    "allreduce_model",
}


def _load_document(path: str | Path) -> dict[str, Any]:
    with open(path, "r", encoding="utf-8") as handle:
        doc = yaml.safe_load(handle)
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: expected a mapping of field names to values")
    return doc


def model_spec_from_mapping(doc: Mapping[str, Any]) -> ModelSpec:
    unknown = set(doc) - _MODEL_KEYS
    if unknown:
        raise ConfigError(f"unknown ModelSpec fields: {sorted(unknown)}")
    return ModelSpec(**doc)


def hardware_spec_from_mapping(doc: Mapping[str, Any]) -> HardwareSpec:
    unknown = set(doc) - _HW_KEYS
    if unknown:
        raise ConfigError(f"unknown HardwareSpec fields: {sorted(unknown)}")
    fields = dict(doc)
    ar = fields.pop("allreduce_model", None)
    if not isinstance(ar, Mapping) or "kind" not in ar:
        raise ConfigError("allreduce_model must be a mapping with a 'kind' of 'ring' or 'map'")
    kind = ar["kind"]
    if kind == "ring":
        allreduce: RingAllReduce | AllReduceTable = RingAllReduce(float(ar["interconnect_bandwidth"]))
    elif kind == "map":
        allreduce = AllReduceTable(ar["bandwidths"])
    else:
        raise ConfigError(f"unknown allreduce_model kind {kind!r}")
    numeric = {k: (int(v) if k == "num_gpus" else float(v)) for k, v in fields.items()}
    return HardwareSpec(allreduce=allreduce, **numeric)


def load_model_spec(path: str | Path) -> ModelSpec:
    """Load a ModelSpec from a YAML/JSON document with exactly the field names."""
    return model_spec_from_mapping(_load_document(path))


def load_hardware_spec(path: str | Path) -> HardwareSpec:
    """Load a HardwareSpec from a YAML/JSON document with exactly the field names."""
    return hardware_spec_from_mapping(_load_document(path))
