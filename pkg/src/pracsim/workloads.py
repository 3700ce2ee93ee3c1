"""Trace format, synthetic benign workloads, mixes, and the multi-core frontend.

The core model is deliberately small: a 4-wide in-order retire stage fed by
trace records, with a 128-entry instruction window bounding how far the core
runs ahead of outstanding reads. Writes are posted. That is enough to turn
memory latency into per-core IPC without modeling a full out-of-order core.

Synthetic traces replace recorded benchmark traces. Each class mixes
streaming runs (row hits under the interleaving's open page), random jumps
(row misses) and hot-row revisits, calibrated so the measured row-buffer
misses per kilo-instruction land in the class band on the reference
controller: H at 10 and above, M from 2 up, L below 2.
"""

from __future__ import annotations

import gzip
import random
from dataclasses import dataclass, field
from typing import Optional

from .controller import BLOCK_BYTES, ControllerConfig, MemoryController
from .dram import DeviceState, Topology
from .mitigations import NoMitigation
from .timing import ConfigError, TimingParams, preset

CPU_CYCLE_PS = 238          # ~4.2 GHz
RETIRE_WIDTH = 4
WINDOW_INSTRS = 128

CLASS_BANDS = {"H": (10.0, None), "M": (2.0, 10.0), "L": (None, 2.0)}


@dataclass(frozen=True)
class TraceRecord:
    bubble_count: int
    op: str                  # read / write / nop
    address: int

    def __post_init__(self):
        if self.bubble_count < 0:
            raise ConfigError("bubble_count must be >= 0")
        if self.op not in ("read", "write", "nop"):
            raise ConfigError(f"bad trace op {self.op!r}")
        if self.address < 0:
            raise ConfigError("address must be >= 0")

    @property
    def instructions(self) -> int:
        return self.bubble_count + (0 if self.op == "nop" else 1)


class Trace:
    def __init__(self, records):
        self.records = list(records)

    def __len__(self):
        return len(self.records)

    @property
    def instructions(self) -> int:
        return sum(r.instructions for r in self.records)

    def save(self, path: str):
        opener = gzip.open if str(path).endswith(".gz") else open
        with opener(path, "wt") as fh:
            fh.write("bubble_count,op,address\n")
            for r in self.records:
                fh.write(f"{r.bubble_count},{r.op},{r.address:#x}\n")

    @classmethod
    def load(cls, path: str) -> "Trace":
        opener = gzip.open if str(path).endswith(".gz") else open
        records = []
        with opener(path, "rt") as fh:
            header = fh.readline().strip()
            if header != "bubble_count,op,address":
                raise ConfigError(f"unrecognized trace header {header!r}")
            for line in fh:
                bubble, op, addr = line.strip().split(",")
                records.append(TraceRecord(int(bubble), op, int(addr, 16)))
        return cls(records)


# ---------------------------------------------------------------------------
# synthetic generation


_CLASS_PROFILE = {
    # bubble mean, random-jump probability, write share,
    # conflict-burst probability, burst half-length
    "H": (30, 0.88, 0.25, 0.05, 24),
    "M": (100, 0.48, 0.25, 0.03, 16),
    "L": (400, 0.11, 0.25, 0.01, 8),
}


def gen_synthetic(cls: str, seed: int, length: int,
                  region_base: int = 0, region_blocks: Optional[int] = None,
                  topo: Optional[Topology] = None) -> Trace:
    """Deterministic synthetic trace of `length` records inside one region.

    Three access phases: random jumps (row misses), sequential runs (row hits
    under the interleaving), and same-bank conflict bursts that ping-pong
    between two rows, the pattern that drives per-row activation counts up
    under benign load.
    """
    if cls not in _CLASS_PROFILE:
        raise ConfigError(f"workload class must be one of H, M, L, got {cls!r}")
    if length < 64:
        raise ConfigError("trace too short to establish a memory-intensity band")
    topo = topo or Topology()
    capacity_blocks = topo.rows_total * topo.row_size_bytes // BLOCK_BYTES
    if region_blocks is None:
        region_blocks = capacity_blocks - region_base
    if region_base + region_blocks > capacity_blocks:
        raise ConfigError("trace region exceeds capacity")
    bubble_mean, p_random, p_write, p_conflict, burst_half = _CLASS_PROFILE[cls]
    rng = random.Random(f"{cls}/{seed}")
    # same-bank row pairs: row index occupies the top block bits, so one row
    # step is a fixed block stride
    row_stride = capacity_blocks // topo.rows_per_bank
    pairs = []
    if region_blocks > 2 * row_stride:
        for _ in range(2):
            a = region_base + rng.randrange(region_blocks - 2 * row_stride)
            pairs.append((a, a + 2 * row_stride))
    records = []
    cur = region_base
    hot = [region_base + rng.randrange(region_blocks) for _ in range(4)]
    burst = []
    for _ in range(length):
        if burst:
            cur = burst.pop()
        else:
            r = rng.random()
            if pairs and r < p_conflict:
                a, b = pairs[rng.randrange(len(pairs))]
                burst = [a, b] * burst_half
                cur = burst.pop()
            elif r < p_conflict + p_random:
                cur = region_base + rng.randrange(region_blocks)
            elif r < p_conflict + p_random + 0.04:
                cur = hot[rng.randrange(len(hot))]
            else:
                cur = region_base + (cur - region_base + 1) % region_blocks
        bubbles = rng.randint(bubble_mean // 2, bubble_mean + bubble_mean // 2)
        op = "write" if rng.random() < p_write else "read"
        records.append(TraceRecord(bubbles, op, cur * BLOCK_BYTES))
    return Trace(records)


@dataclass(frozen=True)
class MixSpec:
    classes: tuple              # four entries from H/M/L
    member_seeds: tuple

    def __post_init__(self):
        if len(self.classes) != 4 or len(self.member_seeds) != 4:
            raise ConfigError("a mix is exactly four traces (quad-core)")
        if any(c not in CLASS_BANDS for c in self.classes):
            raise ConfigError("mix classes must be H, M or L")

    @property
    def name(self) -> str:
        return "".join(self.classes)


MIX_COMBOS = (("H",) * 4, ("M",) * 4, ("L",) * 4,
              ("H", "H", "M", "M"), ("M", "M", "L", "L"), ("L", "L", "H", "H"))


def build_mixes(count: int = 60, seed: int = 0) -> list:
    if count % len(MIX_COMBOS) != 0:
        raise ConfigError(f"mix count must be divisible by {len(MIX_COMBOS)}")
    rng = random.Random(seed)
    per = count // len(MIX_COMBOS)
    mixes = []
    for combo in MIX_COMBOS:
        for _ in range(per):
            mixes.append(MixSpec(combo, tuple(rng.randrange(1 << 30) for _ in range(4))))
    return mixes


def materialize_mix(mix: MixSpec, length: int, topo: Topology) -> list:
    """Four traces, each confined to its own quarter of the address space so
    cores never share rows constructively."""
    capacity_blocks = topo.rows_total * topo.row_size_bytes // BLOCK_BYTES
    region = capacity_blocks // 4
    return [gen_synthetic(cls, s, length, region_base=i * region,
                          region_blocks=region, topo=topo)
            for i, (cls, s) in enumerate(zip(mix.classes, mix.member_seeds))]


# ---------------------------------------------------------------------------
# desk-scale presets


def desk_timing(base: TimingParams) -> TimingParams:
    """Shrink the refresh window so 64-row banks are fully refreshed in
    tREFW/tREFI = 8 REF commands; everything else is untouched."""
    from dataclasses import replace
    return replace(base, tREFW=8 * base.tREFI)


# ---------------------------------------------------------------------------
# core model


def _ceil_div(a: int, b: int) -> int:
    return -(-a // b)


class CoreModel:
    def __init__(self, core_id: int, trace: Trace, max_instructions: Optional[int] = None):
        self.core_id = core_id
        self.records = trace.records
        self.max_instructions = max_instructions
        self.idx = 0
        self.frontend_ready = 0
        self.pending = []            # [size, resp_time or None]
        self.occupancy = 0
        self.retire_clock = 0
        self.retired_instrs = 0
        self.issued_instrs = 0

    def fetch_done(self) -> bool:
        if self.idx >= len(self.records):
            return True
        return (self.max_instructions is not None
                and self.issued_instrs >= self.max_instructions)

    def done(self) -> bool:
        return self.fetch_done() and not self.pending

    def window_has_room(self) -> bool:
        if self.fetch_done():
            return False
        # a record wider than the window fills it rather than blocking forever
        footprint = min(self.records[self.idx].instructions, WINDOW_INSTRS)
        return self.occupancy + footprint <= WINDOW_INSTRS

    def can_issue(self, now: int) -> bool:
        return self.window_has_room() and self.frontend_ready <= now

    def next_record(self) -> TraceRecord:
        return self.records[self.idx]

    def issue(self, now: int, resp_time: Optional[int]):
        """Dispatch the head record; resp_time is None for outstanding reads."""
        rec = self.records[self.idx]
        size = rec.instructions
        footprint = min(size, WINDOW_INSTRS)
        at = max(self.frontend_ready, now)
        entry = [size, footprint, resp_time]
        self.pending.append(entry)
        self.occupancy += footprint
        self.issued_instrs += size
        self.idx += 1
        self.frontend_ready = at + _ceil_div(max(size, 1), RETIRE_WIDTH) * CPU_CYCLE_PS
        self.drain()
        return entry

    def on_response(self, entry, resp_time: int):
        entry[2] = resp_time
        self.drain()

    def drain(self):
        while self.pending and self.pending[0][2] is not None:
            size, footprint, resp = self.pending.pop(0)
            self.retire_clock = (max(self.retire_clock, resp)
                                 + _ceil_div(max(size, 1), RETIRE_WIDTH) * CPU_CYCLE_PS)
            self.retired_instrs += size
            self.occupancy -= footprint

    def ipc(self, end_ps: Optional[int] = None) -> float:
        """Retired instructions per cycle, over the core's own completion time
        or the run end when it was still stalled there."""
        if self.done() or end_ps is None:
            end = max(self.retire_clock, 1)
        else:
            end = max(end_ps, 1)
        return self.retired_instrs / (end / CPU_CYCLE_PS)


# ---------------------------------------------------------------------------
# system run loop


@dataclass
class StopCondition:
    instructions_per_core: Optional[int] = 100_000
    max_cycles: Optional[int] = 3_000_000

    @property
    def max_ps(self) -> Optional[int]:
        return None if self.max_cycles is None else self.max_cycles * CPU_CYCLE_PS


@dataclass
class RunResult:
    ipcs: list
    instructions: list
    end_ps: int
    controller_stat: dict
    device_counts: dict
    read_latencies: list
    min_deadline_slack: Optional[int]
    max_pair_disturbance: int
    monitor_violations: list
    preventive_refreshes: int
    backoffs: int


def run_cores(traces, controller: MemoryController,
              stop: Optional[StopCondition] = None) -> RunResult:
    """Replay one trace per core against a shared controller until every core
    retires its budget or the global cycle cap is hit."""
    stop = stop or StopCondition()
    cores = [CoreModel(i, tr, stop.instructions_per_core) for i, tr in enumerate(traces)]
    req_entry = {}
    now = 0
    cap = stop.max_ps
    guard = 0
    while True:
        guard += 1
        if guard > 50_000_000:
            raise RuntimeError("run_cores livelock")
        # deliver read completions due by now
        if controller.completions:
            controller.completions.sort(key=lambda c: c[0])
            while controller.completions and controller.completions[0][0] <= now:
                done_at, req = controller.completions.pop(0)
                core, entry = req_entry.pop(req.req_id)
                cores[core].on_response(entry, done_at)
        # cores hand requests to the controller
        for core in cores:
            while core.can_issue(now):
                rec = core.next_record()
                if rec.op == "nop":
                    core.issue(now, now)
                    continue
                is_write = rec.op == "write"
                if not controller.can_accept(is_write):
                    break
                at = max(core.frontend_ready, now)
                entry = core.issue(now, at if is_write else None)
                req = controller.enqueue(core.core_id, rec.address, is_write, at)
                if not is_write:
                    req_entry[req.req_id] = (core.core_id, entry)
        t_ctrl = controller.step(now)
        if all(c.done() for c in cores):
            break
        if cap is not None and now >= cap:
            break
        waits = [t_ctrl]
        if controller.completions:
            waits.append(min(c[0] for c in controller.completions))
        for core in cores:
            # cores stalled on a full queue or window wake on those events;
            # only a future frontend time is a wake-up of its own
            if (not core.fetch_done() and core.window_has_room()
                    and core.frontend_ready > now):
                waits.append(core.frontend_ready)
        nxt = min(w for w in waits if w is not None and w > now) if waits else None
        if nxt is None:
            break
        if cap is not None:
            nxt = min(nxt, cap)
            if nxt == now:
                break
        now = nxt

    end = now if (cap is not None and now >= cap) else max(
        [c.retire_clock for c in cores] + [now])
    dev = controller.dev
    monitor = dev.monitor
    return RunResult(
        ipcs=[c.ipc(end) for c in cores],
        instructions=[c.retired_instrs for c in cores],
        end_ps=end,
        controller_stat=dict(controller.stat),
        device_counts=dict(dev.counts),
        read_latencies=list(controller.read_latencies),
        min_deadline_slack=controller.min_deadline_slack,
        max_pair_disturbance=0 if monitor is None else monitor.max_pair,
        monitor_violations=[] if monitor is None else list(monitor.violations),
        preventive_refreshes=controller.stat["preventive_refreshes"],
        backoffs=controller.stat["backoffs"],
    )


def measure_rbmpki(trace: Trace, topo: Optional[Topology] = None,
                   t: Optional[TimingParams] = None) -> float:
    """Row-buffer misses per kilo-instruction on the reference controller,
    measured solo with no mitigation."""
    topo = topo or Topology()
    t = t or preset("ddr5-3200an-base")
    dev = DeviceState(topo, t)
    ctrl = MemoryController(topo, t, dev, NoMitigation())
    result = run_cores([trace], ctrl, StopCondition(None, 30_000_000))
    instrs = result.instructions[0]
    if instrs == 0:
        return 0.0
    return 1000.0 * result.controller_stat["acts"] / instrs
