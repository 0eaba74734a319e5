"""Command-line entry point.

Subcommands: analyze (closed-form cost breakdown), simulate (event-driven
run), optimize (best static + mixed plans), sweep (sensitivity tables),
gen-trace (synthetic workloads), plan (shard map / reload plan inspection).

Exit status is 0 on success; domain errors print a JSON object with an
error_kind field to stderr and exit 1.
"""

from __future__ import annotations

import argparse
import json
import sys

from . import perf
from .optimize import (
    WorkloadSummary,
    best_mixed,
    best_static,
    confirm_by_simulation,
    sweep,
    sweep_csv,
)
from .perf import Mode, Phase
from .reshard import shard_map, weight_reload_plan
from .sim import SchedulingPolicy, SimOptions, replay_check, simulate
from .specs import (
    ConfigError,
    KVLayout,
    ParallelismConfig,
    load_hardware_spec,
    load_model_spec,
)
from .workload import TraceError, gen_trace, parse_trace, representative_lengths, write_trace

_POLICIES = {
    "prefill": SchedulingPolicy.PREFILL_PRIORITIZED,
    "decode": SchedulingPolicy.DECODE_PRIORITIZED,
    "transition-min": SchedulingPolicy.TRANSITION_MINIMIZING,
}


def _add_specs(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--model", required=True, help="model spec document (YAML/JSON)")
    parser.add_argument("--hw", required=True, help="hardware spec document (YAML/JSON)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="shardsim")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analyze", help="closed-form cost breakdown for one configuration")
    _add_specs(p)
    p.add_argument("--tp", type=int, required=True)
    p.add_argument("--pp", type=int, required=True)
    p.add_argument("--dp", type=int, default=1)
    p.add_argument("--phase", choices=["prefill", "decode"], default="decode")
    p.add_argument("--batch", type=float, default=1.0)
    p.add_argument("--seqlen", type=float, required=True)
    p.add_argument("--mode", choices=["roofline", "additive"], default="roofline")

    p = sub.add_parser("simulate", help="run the event-driven simulator on a trace")
    _add_specs(p)
    p.add_argument("--trace", required=True)
    p.add_argument("--policy", choices=sorted(_POLICIES), default="transition-min")
    p.add_argument("--prefill-cfg", required=True, help="e.g. tp1.pp4.dp1")
    p.add_argument("--decode-cfg", required=True, help="e.g. tp4.pp1.dp1")
    p.add_argument("--no-overlap", action="store_true")
    p.add_argument("--nhd", action="store_true", help="store host KV in NHD layout")
    p.add_argument("--p2p", action="store_true", help="charge pipeline peer-to-peer transfers")
    p.add_argument("--mode", choices=["roofline", "additive"], default="roofline")
    p.add_argument("--force-mixed", action="store_true")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--events-csv", help="write the event log to this CSV file")

    p = sub.add_parser("optimize", help="best static and mixed parallelization plans")
    _add_specs(p)
    p.add_argument("--trace", required=True)
    p.add_argument("--mode", choices=["roofline", "additive"], default="roofline")
    p.add_argument("--confirm-sim", action="store_true", help="attach simulated tokens/s")

    p = sub.add_parser("sweep", help="sensitivity sweep over all-reduce scale or P:D ratio")
    _add_specs(p)
    p.add_argument("--trace", required=True)
    p.add_argument("--axis", choices=["allreduce-scale", "pd-ratio"], required=True)
    p.add_argument("--grid", required=True, help="comma-separated values, e.g. 0.1,1,10,50")
    p.add_argument("--mode", choices=["roofline", "additive"], default="roofline")
    p.add_argument("--out", required=True, help="CSV output path")

    p = sub.add_parser("gen-trace", help="synthesize a uniform-length trace")
    p.add_argument("--kind", choices=["constant", "ratio"], required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--input-len", type=int, required=True)
    p.add_argument("--output-len", type=int)
    p.add_argument("--ratio", type=float)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    p = sub.add_parser("plan", help="inspect shard maps and weight reload plans")
    _add_specs(p)
    p.add_argument("--cfg", required=True, help="e.g. tp2.pp2.dp1")
    p.add_argument("--new-cfg", help="also print the reload plan for switching to this config")

    return parser


def _cmd_analyze(args) -> int:
    model = load_model_spec(args.model)
    hw = load_hardware_spec(args.hw)
    cfg = ParallelismConfig(tp=args.tp, pp=args.pp, dp=args.dp)
    phase = Phase.PREFILL if args.phase == "prefill" else Phase.DECODE
    mode = Mode.ROOFLINE if args.mode == "roofline" else Mode.ADDITIVE
    micro = args.batch / (cfg.pp * cfg.dp)
    cost = perf.layer_time(model, hw, cfg, micro, args.seqlen, phase, mode)
    doc = {
        "config": cfg.label(),
        "phase": phase.value,
        "global_batch": args.batch,
        "micro_batch": micro,
        "seq_len": args.seqlen,
        "per_layer": cost.as_dict(),
        "stage_time_s": perf.stage_time(model, hw, cfg, args.batch, args.seqlen, phase, mode),
        "throughput_inverse_s_per_request": perf.throughput_inverse(
            model, hw, cfg, args.batch, args.seqlen, phase, mode
        ),
    }
    print(json.dumps(doc, indent=2, sort_keys=True))
    return 0


def _cmd_simulate(args) -> int:
    model = load_model_spec(args.model)
    hw = load_hardware_spec(args.hw)
    trace = parse_trace(args.trace)
    options = SimOptions(
        overlap=not args.no_overlap,
        mode=Mode.ROOFLINE if args.mode == "roofline" else Mode.ADDITIVE,
        charge_p2p=args.p2p,
        kv_layout=KVLayout.NHD if args.nhd else KVLayout.HND,
        force_mixed=args.force_mixed,
        seed=args.seed,
    )
    report = simulate(
        model,
        hw,
        trace.requests,
        _POLICIES[args.policy],
        ParallelismConfig.parse(args.prefill_cfg),
        ParallelismConfig.parse(args.decode_cfg),
        options,
    )
    verdict = replay_check(report)
    if not verdict:
        raise RuntimeError(f"replay check failed: {verdict.violation}")
    if args.events_csv:
        report.write_events_csv(args.events_csv)
    print(report.to_document())
    return 0


def _cmd_optimize(args) -> int:
    model = load_model_spec(args.model)
    hw = load_hardware_spec(args.hw)
    s_in, s_out, n = representative_lengths(parse_trace(args.trace))
    summary = WorkloadSummary(input_len=s_in, output_len=s_out, count=n)
    mode = Mode.ROOFLINE if args.mode == "roofline" else Mode.ADDITIVE
    static = best_static(model, hw, summary, mode)
    mixed = best_mixed(model, hw, summary, mode)
    if args.confirm_sim:
        static = confirm_by_simulation(model, hw, static, summary)
        mixed = confirm_by_simulation(model, hw, mixed, summary)
    doc = {
        "workload": {"input_len": s_in, "output_len": s_out, "count": n},
        "best_static": static.as_dict(),
        "best_mixed": mixed.as_dict(),
    }
    print(json.dumps(doc, indent=2, sort_keys=True))
    return 0


def _cmd_sweep(args) -> int:
    model = load_model_spec(args.model)
    hw = load_hardware_spec(args.hw)
    s_in, s_out, n = representative_lengths(parse_trace(args.trace))
    summary = WorkloadSummary(input_len=s_in, output_len=s_out, count=n)
    grid = [float(v) for v in args.grid.split(",") if v.strip()]
    axis = args.axis.replace("-", "_")
    mode = Mode.ROOFLINE if args.mode == "roofline" else Mode.ADDITIVE
    rows = sweep(model, hw, summary, axis, grid, mode)
    text = sweep_csv(rows)
    with open(args.out, "w", encoding="utf-8") as handle:
        handle.write(text)
    print(text, end="")
    return 0


def _cmd_gen_trace(args) -> int:
    trace = gen_trace(
        kind=args.kind,
        n=args.n,
        input_len=args.input_len,
        output_len=args.output_len,
        d_to_p_ratio=args.ratio,
        seed=args.seed,
    )
    write_trace(trace, args.out)
    print(f"wrote {len(trace)} requests to {args.out}")
    return 0


def _cmd_plan(args) -> int:
    model = load_model_spec(args.model)
    hw = load_hardware_spec(args.hw)
    cfg = ParallelismConfig.parse(args.cfg)
    print(shard_map(model, cfg).table())
    if args.new_cfg:
        plan = weight_reload_plan(model, hw, cfg, ParallelismConfig.parse(args.new_cfg))
        print()
        print(f"reload to {args.new_cfg}: {plan.total_bytes} bytes, wall {plan.wall_time:.6g} s")
        print(f"note: {plan.kv_note}")
    return 0


_COMMANDS = {
    "analyze": _cmd_analyze,
    "simulate": _cmd_simulate,
    "optimize": _cmd_optimize,
    "sweep": _cmd_sweep,
    "gen-trace": _cmd_gen_trace,
    "plan": _cmd_plan,
}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (ConfigError, TraceError, ValueError, OSError) as exc:
        print(
            json.dumps({"error_kind": type(exc).__name__, "message": str(exc)}),
            file=sys.stderr,
        )
        return 1


if __name__ == "__main__":
    sys.exit(main())
