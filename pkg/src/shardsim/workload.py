"""Workload trace ingestion and synthesis.

Traces are newline-delimited JSON records with integer input_len/output_len
fields and an optional id. Arrival times are deliberately absent: the toolkit
models offline, throughput-oriented runs where every request exists at t=0.
"""

from __future__ import annotations

import json
import statistics
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

from .specs import ConfigError, Request


class TraceError(ValueError):
    """A trace file or generator parameter is malformed."""


@dataclass(frozen=True)
class TraceSummary:
    count: int
    mean_input_len: float
    median_input_len: float
    mean_output_len: float
    median_output_len: float


@dataclass(frozen=True)
class WorkloadTrace:
    requests: tuple[Request, ...]

    def __len__(self) -> int:
        return len(self.requests)

    def summary(self) -> TraceSummary:
        if not self.requests:
            raise TraceError("cannot summarize an empty trace")
        inputs = [r.input_len for r in self.requests]
        outputs = [r.output_len for r in self.requests]
        return TraceSummary(
            count=len(self.requests),
            mean_input_len=statistics.fmean(inputs),
            median_input_len=statistics.median(inputs),
            mean_output_len=statistics.fmean(outputs),
            median_output_len=statistics.median(outputs),
        )


def parse_trace(path: str | Path) -> WorkloadTrace:
    """Read a JSONL trace, preserving file order and assigning missing ids."""
    requests: list[Request] = []
    try:
        handle = open(path, "r", encoding="utf-8")
    except OSError as exc:
        raise TraceError(f"cannot open trace {path}: {exc}") from exc
    with handle:
        for lineno, line in enumerate(handle, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise TraceError(f"{path}:{lineno}: not a JSON record ({exc.msg})") from exc
            if not isinstance(record, dict):
                raise TraceError(f"{path}:{lineno}: record must be a JSON object")
            for key in ("input_len", "output_len"):
                value = record.get(key)
                if not isinstance(value, int) or isinstance(value, bool) or value < 1:
                    raise TraceError(f"{path}:{lineno}: {key} must be an integer >= 1, got {value!r}")
            try:
                requests.append(
                    Request(
                        id=record.get("id", len(requests)),
                        input_len=record["input_len"],
                        output_len=record["output_len"],
                    )
                )
            except ConfigError as exc:
                raise TraceError(f"{path}:{lineno}: {exc}") from exc
    return WorkloadTrace(requests=tuple(requests))


def write_trace(trace: WorkloadTrace, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        for req in trace.requests:
            handle.write(
                json.dumps({"id": req.id, "input_len": req.input_len, "output_len": req.output_len})
                + "\n"
            )


def gen_trace(
    kind: str,
    n: int,
    input_len: int,
    output_len: int | None = None,
    d_to_p_ratio: float | None = None,
    seed: int = 0,
) -> WorkloadTrace:
    """Synthesize a uniform-length trace.

    'constant' takes an explicit output_len; 'ratio' derives it as
    round(ratio * input_len), clamped to at least one token. Generation is
    deterministic in the seed (current kinds carry no randomness; the seed is
    part of the interface for future jittered kinds).
    """
    if n < 1:
        raise TraceError("n must be >= 1")
    if input_len < 1:
        raise TraceError("input_len must be >= 1")
    if kind == "constant":
        if output_len is None or output_len < 1:
            raise TraceError("constant traces need output_len >= 1")
        out = output_len
    elif kind == "ratio":
        if d_to_p_ratio is None or d_to_p_ratio < 0:
            raise TraceError("ratio traces need a non-negative d_to_p_ratio")
        out = max(1, round(d_to_p_ratio * input_len))
    else:
        raise TraceError(f"unknown trace kind {kind!r}")
    del seed
    return WorkloadTrace(
        requests=tuple(Request(id=i, input_len=input_len, output_len=out) for i in range(n))
    )


def trace_from_pairs(pairs: Iterable[tuple[int, int]]) -> WorkloadTrace:
    """Build a trace from (input_len, output_len) pairs; handy in tests."""
    return WorkloadTrace(
        requests=tuple(Request(id=i, input_len=p, output_len=d) for i, (p, d) in enumerate(pairs))
    )


def representative_lengths(trace: WorkloadTrace) -> tuple[int, int, int]:
    """(s_in, s_out, n) for the analytic planner: median lengths, rounded."""
    s = trace.summary()
    return max(1, round(s.median_input_len)), max(1, round(s.median_output_len)), s.count
