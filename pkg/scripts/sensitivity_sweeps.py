#!/usr/bin/env python3
"""Sensitivity experiments on the PCIe 8-GPU fixture: how the best static and
mixed parallelization plans move with all-reduce bandwidth and with the
decode:prefill length ratio. Writes CSVs next to this script under results/.
"""

from __future__ import annotations

from pathlib import Path

from shardsim import HardwareSpec, ModelSpec, RingAllReduce
from shardsim.optimize import WorkloadSummary, sweep, sweep_csv

GiB = 1024**3

MODEL = ModelSpec(
    num_layers=48,
    params_per_layer=700_000_000,
    num_query_heads=64,
    num_kv_heads=8,
    head_dim=128,
)

FLEET = HardwareSpec(
    num_gpus=8,
    hbm_bandwidth=6e11,
    peak_flops=1.25e14,
    gpu_memory=24 * GiB,
    host_memory_per_gpu=80 * GiB,
    host_link_bandwidth=1.6e10,
    allreduce=RingAllReduce(1.6e10),
)


def main() -> None:
    out_dir = Path(__file__).resolve().parent / "results"
    out_dir.mkdir(exist_ok=True)
    summary = WorkloadSummary(input_len=3000, output_len=300, count=256)

    rows = sweep(MODEL, FLEET, summary, "allreduce_scale", [0.1, 0.2, 0.5, 1, 2, 5, 10, 20, 50])
    path = out_dir / "allreduce_scale.csv"
    path.write_text(sweep_csv(rows))
    print(f"# all-reduce bandwidth scale (written to {path})")
    for row in rows:
        print(
            f"  x{row.axis_value:<5g} static {row.static.cfg_p.label():<14s} "
            f"{row.static.predicted_inverse_throughput:.4f} s/req   "
            f"mixed {row.mixed.cfg_p.label()}->{row.mixed.cfg_d.label()} "
            f"{row.mixed.predicted_inverse_throughput:.4f} s/req"
        )

    ratios = [1 / 3000, 0.05, 0.1, 0.2, 0.5, 1.0, 2.0]
    rows = sweep(MODEL, FLEET, summary, "pd_ratio", ratios)
    path = out_dir / "pd_ratio.csv"
    path.write_text(sweep_csv(rows))
    print(f"\n# decode:prefill length ratio at input_len=3000 (written to {path})")
    for row in rows:
        gain = row.static.predicted_inverse_throughput / row.mixed.predicted_inverse_throughput
        print(
            f"  ratio {row.axis_value:<8.4f} static {row.static.cfg_p.label():<14s} "
            f"mixed {row.mixed.cfg_p.label()}->{row.mixed.cfg_d.label()} "
            f"analytic gain x{gain:.3f}"
        )


if __name__ == "__main__":
    main()
