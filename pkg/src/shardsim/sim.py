"""Deterministic event-driven simulator of a full offline generation run.

Models continuous batching, three scheduling policies, host-tier KV
buffering, weight re-sharding at stage transitions, and overlap between
computation and host-link transfers. Time advances on a monotone virtual
clock; a run is a pure function of its inputs and two runs with identical
inputs produce byte-identical event logs.

KV accounting reserves each sequence's cache at its full final size
(input_len + output_len tokens) from prefill admission until release, so a
resident sequence never overflows a tier as its context grows. Transfers move
whole sequences; per-sequence bytes are integers and conservation is exact.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Iterable

from . import perf
from .perf import Mode, Phase
from .reshard import contiguous_runs, weight_reload_plan
from .specs import (
    ConfigError,
    HardwareSpec,
    KVLayout,
    ModelSpec,
    ParallelismConfig,
    Request,
    RingAllReduce,
    kv_bytes_per_token,
    total_weight_bytes,
    validate_config,
)


class SimulationError(ValueError):
    """The requested run is impossible (empty workload, unbufferable request, ...)."""


class SchedulingPolicy(Enum):
    PREFILL_PRIORITIZED = "prefill"
    DECODE_PRIORITIZED = "decode"
    TRANSITION_MINIMIZING = "transition-min"


class Residency(Enum):
    GPU = "gpu"
    CPU = "cpu"
    IN_TRANSIT = "in_transit"
    RELEASED = "released"


@dataclass
class TieredKVState:
    """Aggregate byte ledger of the two KV tiers plus per-sequence residency."""

    gpu_capacity: float
    cpu_capacity: float
    gpu_used: int = 0
    cpu_used: int = 0
    inflight_out: int = 0
    inflight_in: int = 0
    residency: dict = field(default_factory=dict)

    def check(self) -> None:
        assert 0 <= self.gpu_used <= self.gpu_capacity + 1e-6, "gpu tier overflow"
        assert 0 <= self.cpu_used <= self.cpu_capacity + 1e-6, "cpu tier overflow"
        assert self.inflight_out >= 0 and self.inflight_in >= 0


@dataclass(frozen=True)
class SimOptions:
    overlap: bool = True
    mode: Mode = Mode.ROOFLINE
    charge_p2p: bool = False
    kv_layout: KVLayout = KVLayout.HND
    nhd_efficiency: float = 0.5
    full_duplex: bool = True
    force_mixed: bool = False
    seed: int = 0

    def as_dict(self) -> dict:
        return {
            "overlap": self.overlap,
            "mode": self.mode.value,
            "charge_p2p": self.charge_p2p,
            "kv_layout": self.kv_layout.value,
            "nhd_efficiency": self.nhd_efficiency,
            "full_duplex": self.full_duplex,
            "force_mixed": self.force_mixed,
            "seed": self.seed,
        }


@dataclass(frozen=True)
class Event:
    """One timestamped record; gpu_id holds the data-parallel replica index."""

    t: float
    kind: str
    seq_id: int | str | None = None
    gpu_id: int | None = None
    bytes: int | None = None
    extra: tuple[tuple[str, object], ...] = ()

    @property
    def payload(self) -> dict:
        return dict(self.extra)

    def serialize(self) -> str:
        return json.dumps(
            {
                "t": repr(self.t),
                "kind": self.kind,
                "seq_id": self.seq_id,
                "gpu_id": self.gpu_id,
                "bytes": self.bytes,
                "extra": [[k, v] for k, v in self.extra],
            },
            sort_keys=True,
        )


@dataclass
class SimReport:
    makespan: float
    requests_per_second: float
    tokens_per_second: float
    prefill_time: float
    decode_time: float
    reshard_time: float
    stalled_transfer_time: float
    transitions: int
    event_log: tuple[Event, ...]
    config: dict
    final_kv_state: TieredKVState

    def to_document(self) -> str:
        doc = {
            "makespan_s": self.makespan,
            "requests_per_second": self.requests_per_second,
            "tokens_per_second": self.tokens_per_second,
            "prefill_time_s": self.prefill_time,
            "decode_time_s": self.decode_time,
            "reshard_time_s": self.reshard_time,
            "stalled_transfer_time_s": self.stalled_transfer_time,
            "transitions": self.transitions,
            "num_events": len(self.event_log),
            "config": self.config,
        }
        return json.dumps(doc, indent=2, sort_keys=True)

    def events_csv(self) -> str:
        """Flatten the event log to CSV rows (timestamp_s, event, seq_id, gpu_id, bytes)."""
        rows = ["timestamp_s,event,seq_id,gpu_id,bytes"]
        for ev in self.event_log:
            seqs = dict(ev.extra).get("seqs")
            if seqs:
                for sid in seqs:
                    rows.append(f"{ev.t!r},{ev.kind},{sid},{_cell(ev.gpu_id)},{_cell(ev.bytes)}")
            else:
                rows.append(
                    f"{ev.t!r},{ev.kind},{_cell(ev.seq_id)},{_cell(ev.gpu_id)},{_cell(ev.bytes)}"
                )
        return "\n".join(rows) + "\n"

    def write_events_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8") as handle:
            handle.write(self.events_csv())

    def serialize_events(self) -> str:
        return "\n".join(ev.serialize() for ev in self.event_log)


def _cell(value) -> str:
    return "" if value is None else str(value)


@dataclass(frozen=True)
class ReplayVerdict:
    ok: bool
    violation: str | None = None
    event_index: int | None = None

    def __bool__(self) -> bool:
        return self.ok


@dataclass
class _Seq:
    req: Request
    replica: int
    kv_bytes: int
    generated: int = 0


def _ceil_chunks(items: list, pp: int) -> list[list]:
    """Split into at most pp chunks of ceil(n/pp), the last possibly smaller."""
    if not items:
        return []
    size = math.ceil(len(items) / pp)
    return [items[i : i + size] for i in range(0, len(items), size)]


class _Engine:
    def __init__(
        self,
        model: ModelSpec,
        hw: HardwareSpec,
        workload: Iterable[Request],
        policy: SchedulingPolicy,
        cfg_p: ParallelismConfig,
        cfg_d: ParallelismConfig,
        options: SimOptions,
    ) -> None:
        requests = list(workload)
        if not requests:
            raise SimulationError("workload is empty")
        for cfg, name in ((cfg_p, "prefill"), (cfg_d, "decode")):
            verdict = validate_config(model, hw, cfg)
            if not verdict:
                raise ConfigError(f"{name} config {cfg.label()}: {verdict.reason}")
        if cfg_p.dp != cfg_d.dp:
            raise ConfigError("prefill and decode configs must share the same dp")
        if cfg_p != cfg_d and policy is not SchedulingPolicy.TRANSITION_MINIMIZING and not options.force_mixed:
            raise ConfigError(
                f"policy {policy.value} requires cfg_p == cfg_d (pass force_mixed to override)"
            )

        self.model = model
        self.hw = hw
        self.policy = policy
        self.cfg_p = cfg_p
        self.cfg_d = cfg_d
        self.options = options
        self.dp = cfg_p.dp
        # Equal dp plus full fleet coverage forces equal tp*pp, so the GPU KV
        # budget is identical under both configs and never jumps at a transition.
        assert cfg_p.gpus_per_replica == cfg_d.gpus_per_replica
        self.replica_gpu_capacity = hw.gpu_memory * cfg_p.gpus_per_replica - total_weight_bytes(model)
        if self.replica_gpu_capacity <= 0:
            raise ConfigError("no GPU memory left for KV cache after weights")
        self.cpu_capacity = hw.cpu_kv_capacity
        kv_tok = kv_bytes_per_token(model)

        self.seqs: list[_Seq] = []
        seen_ids = set()
        for i, req in enumerate(requests):
            if req.id in seen_ids:
                raise SimulationError(f"duplicate request id {req.id!r}")
            seen_ids.add(req.id)
            k = (req.input_len + req.output_len) * kv_tok
            if k > self.replica_gpu_capacity:
                raise SimulationError(
                    f"request {req.id!r} needs {k} KV bytes but a replica's GPU tier holds "
                    f"{self.replica_gpu_capacity:.0f}"
                )
            if policy is SchedulingPolicy.TRANSITION_MINIMIZING and k > self.cpu_capacity:
                raise SimulationError(
                    f"request {req.id!r} needs {k} KV bytes but the CPU tier holds "
                    f"{self.cpu_capacity:.0f}; it can never be buffered"
                )
            self.seqs.append(_Seq(req=req, replica=i % self.dp, kv_bytes=k))

        self.pending: list[list[_Seq]] = [[] for _ in range(self.dp)]
        for seq in self.seqs:
            self.pending[seq.replica].append(seq)
        self.residents: list[list[_Seq]] = [[] for _ in range(self.dp)]
        self.cpu_queue: list[list[_Seq]] = [[] for _ in range(self.dp)]
        self.inflight_seq: list[_Seq | None] = [None for _ in range(self.dp)]
        self.inflight_left: list[float] = [0.0 for _ in range(self.dp)]
        self.gpu_used: list[int] = [0 for _ in range(self.dp)]
        self.gpu_committed: list[int] = [0 for _ in range(self.dp)]
        self.ready: list[tuple[float, int, _Seq]] = []

        self.kv = TieredKVState(
            gpu_capacity=self.replica_gpu_capacity * self.dp,
            cpu_capacity=self.cpu_capacity,
        )
        self.t = 0.0
        self.events: list[Event] = []
        self.prefill_busy = 0.0
        self.decode_busy = 0.0
        self.reshard_time = 0.0
        self.stalled = 0.0
        self.transitions = 0
        self.phase_index = 0
        self.swap_out_active = False

        links = cfg_p.gpus_per_replica * hw.host_link_bandwidth
        self.out_bw = links * self._link_efficiency(cfg_p)
        self.in_bw = links * self._link_efficiency(cfg_d)

    # -- helpers -------------------------------------------------------------

    def _link_efficiency(self, cfg: ParallelismConfig) -> float:
        # Probe contiguity at a token count > 1: NHD head-sharded slices break
        # into per-token runs, degrading effective link bandwidth.
        runs = contiguous_runs(self.options.kv_layout, 2, self.model.num_kv_heads, cfg.tp)
        return 1.0 if runs == 1 else self.options.nhd_efficiency

    def _p2p_bandwidth(self) -> float:
        ar = self.hw.allreduce
        if isinstance(ar, RingAllReduce):
            return ar.interconnect_bandwidth
        return self.hw.host_link_bandwidth

    def _log(self, kind: str, seq=None, gpu=None, nbytes=None, t=None, **extra) -> None:
        self.events.append(
            Event(
                t=self.t if t is None else t,
                kind=kind,
                seq_id=seq,
                gpu_id=gpu,
                bytes=nbytes,
                extra=tuple(sorted(extra.items())),
            )
        )

    def _phase_start(self, phase: str) -> None:
        self.phase_index += 1
        self._log("phase_start", phase=phase, index=self.phase_index)

    def _transition(self, direction: str, cfg_from: ParallelismConfig, cfg_to: ParallelismConfig) -> None:
        plan = weight_reload_plan(self.model, self.hw, cfg_from, cfg_to)
        self.transitions += 1
        self._log("transition", direction=direction, reshard_s=plan.wall_time)
        self.reshard_time += plan.wall_time
        self.t += plan.wall_time

    def _quantum(self, cfg: ParallelismConfig, seq_lens: list[int], phase: Phase) -> float:
        cost = perf.layer_time_batch(self.model, self.hw, cfg, seq_lens, phase, self.options.mode)
        q = self.model.num_layers / cfg.pp * cost.layer_time
        if self.options.charge_p2p and cfg.pp > 1:
            tokens = sum(seq_lens) if phase is Phase.PREFILL else len(seq_lens)
            q += tokens * self.model.activation_bytes_per_token / self._p2p_bandwidth()
        return q

    # -- prefill -------------------------------------------------------------

    def _pack(self, replica: int, gpu_room: float, cpu_room: float | None) -> list[_Seq]:
        batch: list[_Seq] = []
        queue = self.pending[replica]
        while queue:
            seq = queue[0]
            if seq.kv_bytes > gpu_room:
                break
            if cpu_room is not None and seq.kv_bytes > cpu_room:
                break
            batch.append(queue.pop(0))
            gpu_room -= seq.kv_bytes
            if cpu_room is not None:
                cpu_room -= seq.kv_bytes
        return batch

    def _prefill_step(
        self,
        batches: dict[int, list[_Seq]],
        swap_to_cpu: bool,
        first_of_phase: bool,
    ) -> None:
        cfg = self.cfg_p
        walls: dict[int, float] = {}
        computes: dict[int, float] = {}
        transfers: dict[int, float] = {}
        for r, batch in batches.items():
            # Prefill streams one sequence per pipeline micro-batch: prefill is
            # compute-bound, so fine chunks keep every stage busy and the fill
            # bubble is one sequence deep. Without a pipeline the batch runs as
            # a single forward pass.
            if cfg.pp > 1:
                chunks = [[s.req.input_len] for s in batch]
            else:
                chunks = [[s.req.input_len for s in batch]]
            compute = sum(self._quantum(cfg, chunk, Phase.PREFILL) for chunk in chunks)
            if first_of_phase:
                compute += (cfg.pp - 1) * self._quantum(cfg, chunks[0], Phase.PREFILL)
            transfer = sum(s.kv_bytes for s in batch) / self.out_bw if swap_to_cpu else 0.0
            computes[r] = compute
            transfers[r] = transfer
            walls[r] = max(compute, transfer) if self.options.overlap else compute + transfer
        wall = max(walls.values())
        for r in sorted(batches):
            self._log(
                "prefill_step",
                gpu=r,
                batch=len(batches[r]),
                compute_s=computes[r],
                transfer_s=transfers[r],
                wall_s=walls[r],
                step_wall_s=wall,
                seqs=tuple(s.req.id for s in batches[r]),
            )
        busy = max(computes.values())
        self.t += wall
        self.prefill_busy += min(wall, busy)
        self.stalled += wall - min(wall, busy)
        for r in sorted(batches):
            for seq in batches[r]:
                self.gpu_used[r] += seq.kv_bytes
                self.gpu_committed[r] += seq.kv_bytes
                self.kv.gpu_used += seq.kv_bytes
                self.kv.residency[seq.req.id] = Residency.GPU
                self._log(
                    "prefill_complete",
                    seq=seq.req.id,
                    gpu=r,
                    nbytes=seq.kv_bytes,
                    input_len=seq.req.input_len,
                    output_len=seq.req.output_len,
                )
                self.kv.check()
        if swap_to_cpu:
            # Own-step KV drains within the step wall (progressive swap-out),
            # so the queue is empty at every step boundary.
            for r in sorted(batches):
                for seq in batches[r]:
                    self.gpu_used[r] -= seq.kv_bytes
                    self.gpu_committed[r] -= seq.kv_bytes
                    self.kv.gpu_used -= seq.kv_bytes
                    self.kv.cpu_used += seq.kv_bytes
                    self.kv.residency[seq.req.id] = Residency.CPU
                    self.cpu_queue[r].append(seq)
                    self._log("swap_out_complete", seq=seq.req.id, gpu=r, nbytes=seq.kv_bytes)
                    self.kv.check()
        else:
            for r in sorted(batches):
                self.residents[r].extend(batches[r])

    # -- prefetcher ----------------------------------------------------------

    def _prefetch_rate(self) -> float:
        if not self.options.full_duplex and self.swap_out_active:
            return self.in_bw / 2.0
        return self.in_bw

    def _try_start_prefetch(self, r: int, now: float, staged: list) -> bool:
        if self.inflight_seq[r] is not None or not self.cpu_queue[r]:
            return False
        seq = self.cpu_queue[r][0]
        if self.gpu_committed[r] + seq.kv_bytes > self.replica_gpu_capacity:
            return False
        self.cpu_queue[r].pop(0)
        self.inflight_seq[r] = seq
        self.inflight_left[r] = float(seq.kv_bytes)
        self.gpu_committed[r] += seq.kv_bytes
        self.kv.cpu_used -= seq.kv_bytes
        self.kv.inflight_in += seq.kv_bytes
        self.kv.residency[seq.req.id] = Residency.IN_TRANSIT
        staged.append((now, r, len(staged), "swap_in_start", seq))
        self.kv.check()
        return True

    def _advance_prefetch(self, t0: float, t1: float) -> None:
        """Move swap-in transfers forward across the window [t0, t1].

        Replica links run independently; their events are merged back into the
        log in timestamp order so the log stays monotone.
        """
        rate = self._prefetch_rate()
        staged: list[tuple[float, int, int, str, _Seq]] = []
        for r in range(self.dp):
            now = t0
            while now < t1:
                if self.inflight_seq[r] is None and not self._try_start_prefetch(r, now, staged):
                    break
                seq = self.inflight_seq[r]
                need = self.inflight_left[r] / rate
                if now + need <= t1 + 1e-15:
                    now = now + need
                    self.inflight_seq[r] = None
                    self.inflight_left[r] = 0.0
                    self.gpu_used[r] += seq.kv_bytes
                    self.kv.inflight_in -= seq.kv_bytes
                    self.kv.gpu_used += seq.kv_bytes
                    self.kv.residency[seq.req.id] = Residency.GPU
                    self.ready.append((now, len(self.ready), seq))
                    staged.append((now, r, len(staged), "swap_in_complete", seq))
                    self.kv.check()
                else:
                    self.inflight_left[r] -= (t1 - now) * rate
                    now = t1
        for when, r, _, kind, seq in sorted(staged, key=lambda item: (item[0], item[1], item[2])):
            self._log(kind, seq=seq.req.id, gpu=r, nbytes=seq.kv_bytes, t=when)

    def _next_prefetch_completion(self) -> float | None:
        rate = self._prefetch_rate()
        best: float | None = None
        for r in range(self.dp):
            if self.inflight_seq[r] is not None:
                cand = self.t + self.inflight_left[r] / rate
            elif self.cpu_queue[r]:
                seq = self.cpu_queue[r][0]
                if self.gpu_committed[r] + seq.kv_bytes > self.replica_gpu_capacity:
                    continue
                cand = self.t + seq.kv_bytes / rate
            else:
                continue
            best = cand if best is None else min(best, cand)
        return best

    def _admit_ready(self) -> None:
        remaining = []
        for t_done, order, seq in self.ready:
            if t_done <= self.t + 1e-15:
                self.residents[seq.replica].append(seq)
            else:
                remaining.append((t_done, order, seq))
        self.ready = remaining

    # -- decode --------------------------------------------------------------

    def _decode_round(
        self,
        first_step: bool,
        prefetch: bool,
        stop_check: Callable[[], bool] | None,
    ) -> tuple[bool, bool]:
        """Run one round (every resident advances once). Returns (first_step, stopped)."""
        cfg = self.cfg_d
        chunk_lists = {r: _ceil_chunks(list(self.residents[r]), cfg.pp) for r in range(self.dp)}
        n_steps = max(len(chunks) for chunks in chunk_lists.values())
        for i in range(n_steps):
            active = {r: chunks[i] for r, chunks in chunk_lists.items() if i < len(chunks)}
            quanta = {}
            for r, chunk in active.items():
                ctx = max(s.req.input_len + s.generated + 1 for s in chunk)
                q = self._quantum(cfg, [ctx] * len(chunk), Phase.DECODE)
                if first_step:
                    q *= cfg.pp  # first micro-batch traverses the whole pipeline
                quanta[r] = q
            wall = max(quanta.values())
            if prefetch:
                self._advance_prefetch(self.t, self.t + wall)
            self.t += wall
            self.decode_busy += wall
            first_step = False
            for r in sorted(active):
                chunk = active[r]
                self._log(
                    "decode_step",
                    gpu=r,
                    tokens=len(chunk),
                    compute_s=quanta[r],
                    wall_s=wall,
                    seqs=tuple(s.req.id for s in chunk),
                )
                for seq in chunk:
                    seq.generated += 1
                for seq in chunk:
                    if seq.generated == seq.req.output_len:
                        self.residents[r].remove(seq)
                        self.gpu_used[r] -= seq.kv_bytes
                        self.gpu_committed[r] -= seq.kv_bytes
                        self.kv.gpu_used -= seq.kv_bytes
                        self.kv.residency[seq.req.id] = Residency.RELEASED
                        self._log("kv_release", seq=seq.req.id, gpu=r, nbytes=seq.kv_bytes)
                        self.kv.check()
            if stop_check is not None and stop_check():
                return first_step, True
        return first_step, False

    def _any_residents(self) -> bool:
        return any(self.residents[r] for r in range(self.dp))

    def _any_pending(self) -> bool:
        return any(self.pending[r] for r in range(self.dp))

    def _kv_in_cpu_path(self) -> bool:
        return (
            any(self.cpu_queue[r] for r in range(self.dp))
            or any(self.inflight_seq[r] is not None for r in range(self.dp))
            or bool(self.ready)
        )

    def _fill_complete(self) -> bool:
        """No swap-in is running or startable: the GPU tier is as full as it gets."""
        for r in range(self.dp):
            if self.inflight_seq[r] is not None:
                return False
            if self.cpu_queue[r]:
                seq = self.cpu_queue[r][0]
                if self.gpu_committed[r] + seq.kv_bytes <= self.replica_gpu_capacity:
                    return False
        return True

    def _wait_for_fill(self) -> None:
        """Stall until the prefetcher has filled every free GPU KV slot it can.

        Decode rounds form the largest batch available; starting before the
        tier is full would run diluted micro-batches for no benefit.
        """
        while not self._fill_complete():
            t_next = self._next_prefetch_completion()
            if t_next is None:
                return
            self._advance_prefetch(self.t, t_next)
            self.stalled += t_next - self.t
            self.t = t_next

    def _decode_phase_buffered(self) -> None:
        first = True
        while True:
            if not self._any_residents():
                self._wait_for_fill()
            self._admit_ready()
            if not self._any_residents():
                assert not self._kv_in_cpu_path(), "prefetcher wedged with work remaining"
                return
            first, _ = self._decode_round(first, prefetch=True, stop_check=None)

    # -- policies ------------------------------------------------------------

    def _run_transition_minimizing(self) -> None:
        cycle = 0
        while self._any_pending():
            if cycle > 0:
                self._transition("decode_to_prefill", self.cfg_d, self.cfg_p)
            self._phase_start("prefill")
            first = True
            while True:
                cpu_room = self.cpu_capacity - self.kv.cpu_used
                batches: dict[int, list[_Seq]] = {}
                for r in range(self.dp):
                    batch = self._pack(r, self.replica_gpu_capacity, cpu_room)
                    if batch:
                        cpu_room -= sum(s.kv_bytes for s in batch)
                        batches[r] = batch
                if not batches:
                    break  # CPU tier full for the next request
                self._prefill_step(batches, swap_to_cpu=True, first_of_phase=first)
                first = False
                if not self._any_pending():
                    break
            self._transition("prefill_to_decode", self.cfg_p, self.cfg_d)
            self._phase_start("decode")
            self._decode_phase_buffered()
            cycle += 1

    def _run_decode_prioritized(self) -> None:
        cycle = 0
        while self._any_pending():
            if cycle > 0:
                self._transition("decode_to_prefill", self.cfg_d, self.cfg_p)
            self._phase_start("prefill")
            batches = {}
            for r in range(self.dp):
                batch = self._pack(r, self.replica_gpu_capacity - self.gpu_used[r], None)
                if batch:
                    batches[r] = batch
            assert batches, "a request that fits the GPU tier must be admissible"
            self._prefill_step(batches, swap_to_cpu=False, first_of_phase=True)
            self._transition("prefill_to_decode", self.cfg_p, self.cfg_d)
            self._phase_start("decode")
            first = True
            while self._any_residents():
                first, _ = self._decode_round(first, prefetch=False, stop_check=None)
            cycle += 1

    def _room_for_next_pending(self) -> bool:
        for r in range(self.dp):
            if self.pending[r]:
                seq = self.pending[r][0]
                if self.gpu_used[r] + seq.kv_bytes <= self.replica_gpu_capacity:
                    return True
        return False

    def _run_prefill_prioritized(self) -> None:
        while True:
            batches = {}
            for r in range(self.dp):
                batch = self._pack(r, self.replica_gpu_capacity - self.gpu_used[r], None)
                if batch:
                    batches[r] = batch
            if batches:
                if self.phase_index > 0:
                    self._transition("decode_to_prefill", self.cfg_d, self.cfg_p)
                self._phase_start("prefill")
                self._prefill_step(batches, swap_to_cpu=False, first_of_phase=True)
            if not self._any_residents() and not self._any_pending():
                return
            self._transition("prefill_to_decode", self.cfg_p, self.cfg_d)
            self._phase_start("decode")
            first = True
            while self._any_residents():
                stop = self._room_for_next_pending if self._any_pending() else None
                first, stopped = self._decode_round(first, prefetch=False, stop_check=stop)
                if stopped:
                    break
            if not self._any_residents() and not self._any_pending():
                return

    # -- entry ---------------------------------------------------------------

    def run(self) -> SimReport:
        self._log(
            "run_start",
            policy=self.policy.value,
            cfg_p=self.cfg_p.label(),
            cfg_d=self.cfg_d.label(),
            requests=len(self.seqs),
        )
        if self.policy is SchedulingPolicy.TRANSITION_MINIMIZING:
            self._run_transition_minimizing()
        elif self.policy is SchedulingPolicy.DECODE_PRIORITIZED:
            self._run_decode_prioritized()
        else:
            self._run_prefill_prioritized()
        self._log("run_end")

        assert self.kv.gpu_used == 0 and self.kv.cpu_used == 0, "kv bytes leaked"
        assert all(s.generated == s.req.output_len for s in self.seqs)
        accounted = self.prefill_busy + self.decode_busy + self.reshard_time + self.stalled
        assert abs(accounted - self.t) <= 1e-9 * max(self.t, 1.0), "time accounting drift"

        out_tokens = sum(s.req.output_len for s in self.seqs)
        config = {
            "policy": self.policy.value,
            "cfg_p": self.cfg_p.label(),
            "cfg_d": self.cfg_d.label(),
            "options": self.options.as_dict(),
            "num_requests": len(self.seqs),
            "output_tokens": out_tokens,
            "gpu_kv_capacity_bytes": self.kv.gpu_capacity,
            "cpu_kv_capacity_bytes": self.kv.cpu_capacity,
            "kv_bytes_per_token": kv_bytes_per_token(self.model),
            "num_gpus": self.hw.num_gpus,
        }
        return SimReport(
            makespan=self.t,
            requests_per_second=len(self.seqs) / self.t,
            tokens_per_second=out_tokens / self.t,
            prefill_time=self.prefill_busy,
            decode_time=self.decode_busy,
            reshard_time=self.reshard_time,
            stalled_transfer_time=self.stalled,
            transitions=self.transitions,
            event_log=tuple(self.events),
            config=config,
            final_kv_state=self.kv,
        )


def simulate(
    model: ModelSpec,
    hw: HardwareSpec,
    workload: Iterable[Request],
    policy: SchedulingPolicy,
    cfg_p: ParallelismConfig,
    cfg_d: ParallelismConfig,
    options: SimOptions | None = None,
) -> SimReport:
    """Run the offline workload to completion and return the measured report.

    Deterministic: identical inputs yield byte-identical event logs.
    """
    return _Engine(model, hw, workload, policy, cfg_p, cfg_d, options or SimOptions()).run()


def replay_check(report: SimReport) -> ReplayVerdict:
    """Re-validate conservation and capacity from the event log alone."""
    gpu_cap = report.config["gpu_kv_capacity_bytes"]
    cpu_cap = report.config["cpu_kv_capacity_bytes"]
    gpu_used = 0
    cpu_used = 0
    last_t = 0.0
    state: dict = {}
    kv_size: dict = {}
    tokens: dict = {}
    out_len: dict = {}

    def fail(i: int, msg: str) -> ReplayVerdict:
        return ReplayVerdict(False, msg, i)

    for i, ev in enumerate(report.event_log):
        if ev.t < last_t - 1e-12:
            return fail(i, "timestamps decrease")
        last_t = max(last_t, ev.t)
        payload = ev.payload
        if ev.kind == "prefill_complete":
            if ev.seq_id in state:
                return fail(i, f"prefill repeated for {ev.seq_id!r}")
            state[ev.seq_id] = Residency.GPU
            kv_size[ev.seq_id] = ev.bytes
            tokens[ev.seq_id] = 0
            out_len[ev.seq_id] = payload["output_len"]
            gpu_used += ev.bytes
        elif ev.kind == "swap_out_complete":
            if state.get(ev.seq_id) is not Residency.GPU:
                return fail(i, f"swap-out of non-resident {ev.seq_id!r}")
            state[ev.seq_id] = Residency.CPU
            gpu_used -= ev.bytes
            cpu_used += ev.bytes
        elif ev.kind == "swap_in_start":
            if state.get(ev.seq_id) is not Residency.CPU:
                return fail(i, f"swap-in of non-buffered {ev.seq_id!r}")
            state[ev.seq_id] = Residency.IN_TRANSIT
            cpu_used -= ev.bytes
        elif ev.kind == "swap_in_complete":
            if state.get(ev.seq_id) is not Residency.IN_TRANSIT:
                return fail(i, f"swap-in completion without start for {ev.seq_id!r}")
            state[ev.seq_id] = Residency.GPU
            gpu_used += ev.bytes
        elif ev.kind == "decode_step":
            for sid in payload["seqs"]:
                if state.get(sid) is not Residency.GPU:
                    return fail(i, f"decode before residency for {sid!r}")
                tokens[sid] += 1
                if tokens[sid] > out_len[sid]:
                    return fail(i, f"decode overrun for {sid!r}")
        elif ev.kind == "kv_release":
            if state.get(ev.seq_id) is not Residency.GPU:
                return fail(i, f"release of non-resident {ev.seq_id!r}")
            if tokens[ev.seq_id] != out_len[ev.seq_id]:
                return fail(i, f"release before completion for {ev.seq_id!r}")
            state[ev.seq_id] = Residency.RELEASED
            gpu_used -= ev.bytes
        if gpu_used > gpu_cap + 1e-6 or gpu_used < 0:
            return fail(i, "tier overflow (gpu)")
        if cpu_used > cpu_cap + 1e-6 or cpu_used < 0:
            return fail(i, "tier overflow (cpu)")

    expected = report.config["num_requests"]
    if len(state) != expected:
        return ReplayVerdict(False, f"saw {len(state)} sequences, expected {expected}", None)
    for sid, st in state.items():
        if st is not Residency.RELEASED:
            return ReplayVerdict(False, f"sequence {sid!r} never released", None)
        if tokens[sid] != out_len[sid]:
            return ReplayVerdict(False, f"sequence {sid!r} decoded {tokens[sid]} of {out_len[sid]}", None)
    if gpu_used != 0 or cpu_used != 0:
        return ReplayVerdict(False, "kv bytes leaked", None)
    return ReplayVerdict(True)
