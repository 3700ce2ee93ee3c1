"""Adversarial access generators and the throughput-consumption math.

Two attacker families:

  wave              security-oriented: hammer a decoy set in balanced rounds
                    so every preventive refresh retires only one aggressor,
                    maximizing the last survivor's activation count
  perf_degradation  availability-oriented: row conflicts across a few banks,
                    paced at tRC, to trigger as many preventive actions as
                    possible

The wave generator runs closed-loop against the device model: after every
refresh-management command the device reports which aggressor's victims were
refreshed and the generator drops that row from the next round. Within a
round, still-live rows are hammered first; a row whose victims were
refreshed before its turn still receives its planned activation at the
round's tail and leaves the rotation at the boundary.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Union

from .dram import ACT, PRE, REF, RFMAB, DeviceState, DisturbanceMonitor, Topology
from .security import PracParams, PrfmParams
from .timing import ConfigError, TimingParams


@dataclass(frozen=True)
class AttackSpec:
    kind: str                      # "wave" or "perf_degradation"
    rows_per_bank: int = 8
    banks: int = 4
    initial_priming: int = 0

    def __post_init__(self):
        if self.kind not in ("wave", "perf_degradation"):
            raise ConfigError("attack kind must be 'wave' or 'perf_degradation'")
        if self.rows_per_bank < 1 or self.banks < 1 or self.initial_priming < 0:
            raise ConfigError("attack spec fields must be non-negative counts")


# ---------------------------------------------------------------------------
# theoretical throughput consumption


@dataclass(frozen=True)
class ConsumptionReport:
    t_available: int        # ps per refresh window left after periodic refresh
    t_attack_period: int    # ps per preventive trigger
    t_prevent: float        # ps consumed by preventive actions per window
    fraction: float         # t_prevent / t_available
    steady_fraction: float  # window-free steady-state form


def theoretical_consumption(t: TimingParams,
                            mech: Union[PrfmParams, PracParams]) -> ConsumptionReport:
    """Worst-case share of DRAM time an attacker can burn in preventive actions."""
    t_available = t.tREFW - t.tRFC * (t.tREFW // t.tREFI)
    if isinstance(mech, PrfmParams):
        period = mech.rfm_th * t.tRC + t.tRFM
        block = t.tRFM
    elif isinstance(mech, PracParams):
        period = mech.abo_th * t.tRC + mech.bo_n_refs * t.tRFM
        block = mech.bo_n_refs * t.tRFM
    else:
        raise ConfigError(f"unsupported mechanism {type(mech).__name__}")
    t_prevent = block * (t_available / period)
    return ConsumptionReport(
        t_available=t_available,
        t_attack_period=period,
        t_prevent=t_prevent,
        fraction=t_prevent / t_available,
        steady_fraction=block / period,
    )


# ---------------------------------------------------------------------------
# wave attack: closed-loop generator + event-driven replay


class WaveAttacker:
    """Feedback-driven row source for the wave pattern on a single bank."""

    def __init__(self, bank: int, rows: int, priming: int = 0):
        self.bank = bank
        self.live = set(range(rows))
        self.priming = priming
        self.sizes = [rows]

    def on_refresh(self, bank: int, aggressor: int):
        if bank == self.bank:
            self.live.discard(aggressor)

    def prime_rows(self):
        for row in sorted(self.live):
            for _ in range(self.priming):
                yield row

    def wave_rows(self):
        """Round-by-round activation targets, reacting to on_refresh() calls."""
        while self.live:
            deferred = []
            for row in sorted(self.live):
                if row in self.live:
                    yield row
                else:
                    deferred.append(row)
            for row in deferred:
                yield row
            self.sizes.append(len(self.live))


@dataclass
class WaveReplayResult:
    sizes: tuple
    realized_max: int
    access_rows: tuple        # ACT order, priming included
    rfm_count: int
    act_count: int
    monitor: Optional[DisturbanceMonitor]


def run_wave_attack(spec_rows: int, sec: Union[PrfmParams, PracParams], t: TimingParams,
                    topo: Optional[Topology] = None, bank: int = 0,
                    tie_break: str = "low", monitor_n_rh: Optional[int] = None,
                    with_ref: bool = False,
                    ref_resets_counters: bool = True) -> WaveReplayResult:
    """Event-driven replay of the wave attack against the device model.

    The device enforces command timing; the generator consumes refresh
    feedback. Sizes per round reproduce the closed-form trajectories, and
    realized_max is the highest activation count any aggressor collected
    between refreshes of its victims.
    """
    topo = topo or Topology.desk()
    if spec_rows > topo.rows_per_bank:
        raise ConfigError("decoy set larger than the bank")
    prac_cfg = None
    prfm_th = None
    if isinstance(sec, PracParams):
        prac_cfg = {"abo_th": sec.abo_th, "bo_n_refs": sec.bo_n_refs,
                    "bo_n_acts": sec.bo_n_acts}
        priming = sec.abo_th - 1
    elif isinstance(sec, PrfmParams):
        prfm_th = sec.rfm_th
        priming = 0
    else:
        raise ConfigError("mechanism/spec mismatch: wave needs PRFM or PRAC params")
    monitor = DisturbanceMonitor(monitor_n_rh, topo.rows_per_bank) if monitor_n_rh else None
    dev = DeviceState(topo, t, prac=prac_cfg, monitor=monitor, tie_break=tie_break,
                      ref_resets_counters=ref_resets_counters)
    attacker = WaveAttacker(bank, spec_rows, priming)

    now = t.tRC  # headroom so the first command never lands at time zero
    next_ref = now + t.tREFI if with_ref else None
    realized = 0
    accesses = []
    rfms = 0

    def tick(step_ps: int):
        nonlocal now
        now = max(now + step_ps, dev.blocked_until)

    def maybe_ref():
        nonlocal next_ref
        if next_ref is not None and now >= next_ref:
            dev.issue(REF, None, max(now, dev.blocked_until))
            tick(t.tRFC)
            next_ref += t.tREFI

    def act_pre(row: int):
        nonlocal realized
        maybe_ref()
        dev.issue(ACT, (bank, row), now)
        accesses.append(row)
        dev.issue(PRE, (bank, row), now + t.tRAS)
        realized = max(realized, dev.banks[bank].counters.get(row, 0))
        tick(t.tRC)

    def drain_obligations():
        nonlocal rfms
        if dev.fsm is not None:
            while dev.fsm.phase == "recovery":
                for ev in dev.issue(RFMAB, None, max(now, dev.blocked_until)):
                    if ev[0] == "refreshed":
                        attacker.on_refresh(ev[1], ev[2])
                tick(t.tRFM)
                rfms += 1
        elif prfm_th is not None:
            while dev.banks[bank].raa >= prfm_th:
                for ev in dev.issue(RFMAB, (bank, -1), max(now, dev.blocked_until)):
                    if ev[0] == "refreshed":
                        attacker.on_refresh(ev[1], ev[2])
                tick(t.tRFM)
                rfms += 1

    for row in attacker.prime_rows():
        act_pre(row)   # priming stays below any threshold, no obligations fire

    for row in attacker.wave_rows():
        act_pre(row)
        drain_obligations()

    return WaveReplayResult(
        sizes=tuple(attacker.sizes), realized_max=realized,
        access_rows=tuple(accesses), rfm_count=rfms,
        act_count=dev.counts[ACT], monitor=monitor)


# ---------------------------------------------------------------------------
# trace emission (file-format types live in the workloads module)


def gen_wave_trace(spec: AttackSpec, sec: Union[PrfmParams, PracParams],
                   t: TimingParams, topo: Optional[Topology] = None):
    """Realize the closed-loop wave attack and emit it as a replayable trace.

    The replay is deterministic, so the recorded open-loop trace reproduces
    the timeline the feedback loop produced.
    """
    from .controller import inverse_map_address
    from .workloads import Trace, TraceRecord

    if spec.kind != "wave":
        raise ConfigError("spec/mechanism mismatch: gen_wave_trace needs kind='wave'")
    if isinstance(sec, PracParams) and spec.initial_priming > sec.abo_th - 1:
        raise ConfigError("wave priming must stay below the back-off threshold")
    topo = topo or Topology.desk()
    result = run_wave_attack(spec.rows_per_bank, sec, t, topo=topo)
    records = []
    for row in result.access_rows:
        addr = inverse_map_address(topo, channel=0, rank=0, bankgroup=0, bank=0,
                                   row=row, column=0)
        records.append(TraceRecord(bubble_count=0, op="read", address=addr))
    return Trace(records), result


def gen_perf_attack_trace(spec: AttackSpec, t: TimingParams, duration_ps: int,
                          topo: Optional[Topology] = None):
    """Single-core row-conflict hammer: banks rotate fastest so every bank
    sees a conflict stream; rows rotate per bank visit."""
    from .controller import inverse_map_address
    from .workloads import Trace, TraceRecord

    if spec.kind != "perf_degradation":
        raise ConfigError("spec/mechanism mismatch: need kind='perf_degradation'")
    topo = topo or Topology()
    rotation = spec.banks * spec.rows_per_bank
    if duration_ps < rotation * t.tRC:
        raise ConfigError("duration shorter than one full rotation of the attack set")
    if spec.banks > topo.bankgroups_per_rank:
        raise ConfigError("attack banks exceed the available bank groups")
    n_records = -(-duration_ps // t.tRC)
    records = []
    for i in range(n_records):
        bg = i % spec.banks                       # bank-group interleave first
        row = (i // spec.banks) % spec.rows_per_bank
        addr = inverse_map_address(topo, channel=0, rank=0, bankgroup=bg, bank=0,
                                   row=row, column=0)
        records.append(TraceRecord(bubble_count=0, op="read", address=addr))
    return Trace(records)
