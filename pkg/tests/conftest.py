"""Shared fixtures: the worked-example model, calibrated hardware profiles,
and a tiny model/fleet for fast simulator tests."""

from __future__ import annotations

import pytest

from shardsim import HardwareSpec, ModelSpec, RingAllReduce

GiB = 1024**3


@pytest.fixture
def model_e() -> ModelSpec:
    """Small model used for exact hand-computed expectations."""
    return ModelSpec(
        num_layers=4,
        params_per_layer=16_777_216,
        num_query_heads=8,
        num_kv_heads=4,
        head_dim=64,
    )


@pytest.fixture
def model_34b() -> ModelSpec:
    """CodeLlama-34B-like GQA shape; total weights 2*48*7e8 = 67.2 GB."""
    return ModelSpec(
        num_layers=48,
        params_per_layer=700_000_000,
        num_query_heads=64,
        num_kv_heads=8,
        head_dim=128,
    )


@pytest.fixture
def model_70b() -> ModelSpec:
    """Llama-2-70B-like shape; total weights exactly 140 GiB."""
    return ModelSpec(
        num_layers=80,
        params_per_layer=939_524_096,
        num_query_heads=64,
        num_kv_heads=8,
        head_dim=128,
    )


def a10_fleet(num_gpus: int) -> HardwareSpec:
    """A10-class PCIe fleet: 24 GiB HBM at 600 GB/s, 125 Tflop/s, 16 GB/s links."""
    return HardwareSpec(
        num_gpus=num_gpus,
        hbm_bandwidth=6e11,
        peak_flops=1.25e14,
        gpu_memory=24 * GiB,
        host_memory_per_gpu=80 * GiB,
        host_link_bandwidth=1.6e10,
        allreduce=RingAllReduce(1.6e10),
    )


def a100_40g_fleet(num_gpus: int) -> HardwareSpec:
    """A100-40GiB-class PCIe fleet."""
    return HardwareSpec(
        num_gpus=num_gpus,
        hbm_bandwidth=1.5e12,
        peak_flops=3e14,
        gpu_memory=40 * GiB,
        host_memory_per_gpu=80 * GiB,
        host_link_bandwidth=1.6e10,
        allreduce=RingAllReduce(1.6e10),
    )


def nvlink_fleet(num_gpus: int) -> HardwareSpec:
    """A100 fleet with a 600 GiB/s NVLink ring for collectives."""
    return HardwareSpec(
        num_gpus=num_gpus,
        hbm_bandwidth=1.5e12,
        peak_flops=3e14,
        gpu_memory=40 * GiB,
        host_memory_per_gpu=80 * GiB,
        host_link_bandwidth=1.6e10,
        allreduce=RingAllReduce(600 * GiB),
    )


def sim_fleet(
    model: ModelSpec,
    gpu_seqs: float,
    cpu_seqs: float,
    seq_tokens: int,
    num_gpus: int = 1,
    dp: int = 1,
    host_link_bandwidth: float = 1.6e10,
) -> HardwareSpec:
    """Fleet sized so each of the dp replicas' GPU tier holds exactly gpu_seqs
    sequences of seq_tokens tokens and the shared CPU tier holds cpu_seqs."""
    from shardsim import kv_bytes_per_token, total_weight_bytes

    k = seq_tokens * kv_bytes_per_token(model)
    return HardwareSpec(
        num_gpus=num_gpus,
        hbm_bandwidth=1e12,
        peak_flops=1e14,
        gpu_memory=(total_weight_bytes(model) + gpu_seqs * k) * dp / num_gpus,
        host_memory_per_gpu=cpu_seqs * k / num_gpus,
        host_link_bandwidth=host_link_bandwidth,
        allreduce=RingAllReduce(1.6e10),
    )


@pytest.fixture
def model_tiny() -> ModelSpec:
    """Fast simulator model: 8 layers, 16 MiB params each."""
    return ModelSpec(
        num_layers=8,
        params_per_layer=16_777_216,
        num_query_heads=8,
        num_kv_heads=4,
        head_dim=64,
    )
