"""Command-level DDR5 device model.

Banks hold an open-row register, per-row activation counters (incremented
while a row is being closed, i.e. at PRE), and a per-bank activation counter
used by threshold-triggered refresh management. A rank-level refresh pointer
walks all rows once per refresh window. The back-off engine is a small FSM:

    delay    bo_n_acts activations re-arm the assert; a threshold crossing
             anywhere sets a pending flag; the arming activation's precharge
             asserts if the flag is set
    window   at most tABO_ACT/tRC further activations may issue
    recovery bo_n_refs RFM commands must arrive; each refreshes the victims
             of the bank's hottest row and clears that row's counter

Timing legality is enforced in picoseconds; a violation raises ProtocolError
with the constraint name and the missing slack. The simulator treats that as
fatal, the fuzz tests treat it as a failed property.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

from .timing import ConfigError, TimingParams

BLAST_RADIUS = 2

ACT, PRE, RD, WR, REF, RFMAB, RFMSB = "ACT", "PRE", "RD", "WR", "REF", "RFMab", "RFMsb"


class ProtocolError(Exception):
    def __init__(self, constraint: str, slack_ps: int, message: str = ""):
        self.constraint = constraint
        self.slack_ps = slack_ps
        super().__init__(message or f"{constraint} violated by {slack_ps} ps")


@dataclass(frozen=True)
class Topology:
    channels: int = 1
    ranks_per_channel: int = 2
    bankgroups_per_rank: int = 8
    banks_per_bankgroup: int = 4
    rows_per_bank: int = 65_536
    row_size_bytes: int = 8192

    def __post_init__(self):
        for name in ("channels", "ranks_per_channel", "bankgroups_per_rank",
                     "banks_per_bankgroup", "rows_per_bank", "row_size_bytes"):
            v = getattr(self, name)
            if v < 1 or (v & (v - 1)) != 0:
                raise ConfigError(f"{name} must be a positive power of two, got {v}")

    @property
    def banks_per_rank(self) -> int:
        return self.bankgroups_per_rank * self.banks_per_bankgroup

    @property
    def banks_total(self) -> int:
        return self.channels * self.ranks_per_channel * self.banks_per_rank

    @property
    def rows_total(self) -> int:
        return self.banks_total * self.rows_per_bank

    @staticmethod
    def desk() -> "Topology":
        """Small topology for exhaustive checks: 64 rows per bank, 1 KiB rows."""
        return Topology(rows_per_bank=64, row_size_bytes=1024)


@dataclass
class BankState:
    open_row: Optional[int] = None
    counters: dict = field(default_factory=dict)   # row -> activation count
    raa: int = 0                                   # bank activations since last RFM
    act_ok: int = 0
    pre_ok: int = 0
    col_ok: int = 0
    last_act: int = -1


@dataclass
class BackOffFsm:
    abo_th: int
    bo_n_refs: int
    bo_n_acts: int
    window_acts: int
    phase: str = "delay"        # idle is represented by an armed delay phase
    delay_left: int = 0
    window_left: int = 0
    refs_needed: int = 0
    pending: bool = False
    assert_ts: int = -1
    asserts: int = 0

    def __post_init__(self):
        self.delay_left = self.bo_n_acts

    def on_close(self, counter_value: int, now: int, signal_latency: int) -> bool:
        """Row-close bookkeeping; returns True when the back-off asserts."""
        if counter_value >= self.abo_th:
            self.pending = True
        if self.phase == "delay":
            self.delay_left -= 1
            if self.delay_left == 0:
                if self.pending:
                    self.pending = False
                    self.asserts += 1
                    self.assert_ts = now + signal_latency
                    if self.window_acts > 0:
                        self.phase = "window"
                        self.window_left = self.window_acts
                    else:
                        self.phase = "recovery"
                        self.refs_needed = self.bo_n_refs
                    return True
                self.delay_left = self.bo_n_acts
        elif self.phase == "window":
            self.window_left -= 1
            if self.window_left == 0:
                self.phase = "recovery"
                self.refs_needed = self.bo_n_refs
        return False

    def on_rfm(self):
        if self.phase == "window":
            # controller may start recovery early; unused window slots lapse
            self.phase = "recovery"
            self.refs_needed = self.bo_n_refs
        if self.phase == "recovery":
            self.refs_needed -= 1
            if self.refs_needed == 0:
                self.phase = "delay"
                self.delay_left = self.bo_n_acts


class DisturbanceMonitor:
    """Victim-centric safety monitor.

    Every activation of an aggressor disturbs the rows within the blast
    radius; the per-(victim, aggressor) tally resets when the victim row is
    refreshed. A tally reaching n_rh is a bitflip witness.
    """

    def __init__(self, n_rh: int, rows_per_bank: int):
        self.n_rh = n_rh
        self.rows_per_bank = rows_per_bank
        self.pair: dict = {}      # (bank, victim, aggressor) -> count
        self.max_pair = 0
        self.violations: list = []

    def on_act(self, bank: int, row: int):
        lo = max(0, row - BLAST_RADIUS)
        hi = min(self.rows_per_bank - 1, row + BLAST_RADIUS)
        for victim in range(lo, hi + 1):
            if victim == row:
                continue
            key = (bank, victim, row)
            c = self.pair.get(key, 0) + 1
            self.pair[key] = c
            if c > self.max_pair:
                self.max_pair = c
            if c >= self.n_rh:
                self.violations.append((bank, victim, row, c))

    def on_row_refreshed(self, bank: int, row: int):
        stale = [k for k in self.pair if k[0] == bank and k[1] == row]
        for k in stale:
            del self.pair[k]


class DeviceState:
    """One memory channel's worth of DRAM state, mutated via issue()."""

    def __init__(self, topo: Topology, t: TimingParams, prac: Optional[dict] = None,
                 prfm_rfm_th: Optional[int] = None, victims_per_rfm: int = 4,
                 ref_resets_counters: bool = True, tie_break: str = "low",
                 monitor: Optional[DisturbanceMonitor] = None,
                 log_commands: bool = False, counter_bits: Optional[int] = None):
        if tie_break not in ("low", "high"):
            raise ConfigError("tie_break must be 'low' or 'high'")
        if counter_bits is not None and counter_bits < 1:
            raise ConfigError("counter_bits must be >= 1")
        self.topo = topo
        self.t = t
        self.banks = [BankState() for _ in range(topo.banks_total)]
        self.prac_enabled = prac is not None
        self.fsm = None
        if prac is not None:
            self.fsm = BackOffFsm(
                abo_th=prac["abo_th"], bo_n_refs=prac["bo_n_refs"],
                bo_n_acts=prac["bo_n_acts"], window_acts=t.window_acts())
        self.prfm_rfm_th = prfm_rfm_th
        self.victims_per_rfm = victims_per_rfm
        self.ref_resets_counters = ref_resets_counters
        self.tie_break = tie_break
        self.counter_max = None if counter_bits is None else (1 << counter_bits) - 1
        self.monitor = monitor
        self.blocked_until = 0          # REF/RFM make the channel unavailable
        self.ref_pointer = 0
        self.rows_per_ref = -(-topo.rows_per_bank // (t.tREFW // t.tREFI))
        self.total_acts = 0
        self.cleared_counts = 0         # counter mass cleared by RFM/REF
        self.saturated_increments = 0   # increments swallowed at saturation
        self.counts = {c: 0 for c in (ACT, PRE, RD, WR, REF, RFMAB, RFMSB)}
        self.log: Optional[list] = [] if log_commands else None

    # ------------------------------------------------------------- helpers

    def bank_index(self, rank: int, bankgroup: int, bank: int) -> int:
        topo = self.topo
        return (rank * topo.bankgroups_per_rank + bankgroup) * topo.banks_per_bankgroup + bank

    def _check(self, ok_at: int, now: int, constraint: str):
        if now < ok_at:
            raise ProtocolError(constraint, ok_at - now)

    def _log(self, now, cmd, bank_idx, row):
        if self.log is not None:
            topo = self.topo
            per_rank = topo.banks_per_rank
            rank, rem = divmod(bank_idx, per_rank)
            bg, bank = divmod(rem, topo.banks_per_bankgroup)
            self.log.append((now, cmd, rank, bg, bank, row))

    # ------------------------------------------------------------- commands

    def issue(self, cmd: str, addr, now: int) -> list:
        """Apply one command; addr is (bank_index, row) or None for REF/RFMab.

        Returns a list of event tuples, e.g. ('backoff_assert', ts) or
        ('refreshed', bank, aggressor_row, victims).
        """
        events = []
        self._check(self.blocked_until, now, "tRFC/tRFM busy")
        if cmd == ACT:
            bank_idx, row = addr
            b = self.banks[bank_idx]
            if b.open_row is not None:
                raise ProtocolError("open-row", 0, "ACT with a row already open")
            self._check(b.act_ok, now, "tRC/tRP")
            if self.fsm is not None and self.fsm.phase == "recovery":
                raise ProtocolError("backoff-recovery", 0, "ACT during recovery")
            if self.fsm is not None and self.fsm.phase == "window" and self.fsm.window_left <= 0:
                raise ProtocolError("tABO_ACT", 0, "window activation budget exhausted")
            b.open_row = row
            b.last_act = now
            b.act_ok = now + self.t.tRC
            b.pre_ok = now + self.t.tRAS
            b.col_ok = now + self.t.tRCD
            b.raa += 1
            self.total_acts += 1
            if self.monitor is not None:
                self.monitor.on_act(bank_idx, row)
        elif cmd == PRE:
            bank_idx, _ = addr
            b = self.banks[bank_idx]
            if b.open_row is None:
                raise ProtocolError("open-row", 0, "PRE with no open row")
            self._check(b.pre_ok, now, "tRAS/tRTP/tWR")
            row = b.open_row
            b.open_row = None
            b.act_ok = max(b.act_ok, now + self.t.tRP)
            # per-row tracking is assumed perfect regardless of mitigation
            count = b.counters.get(row, 0) + 1
            if self.counter_max is not None and count > self.counter_max:
                count = self.counter_max   # saturating counter
                self.saturated_increments += 1
            b.counters[row] = count
            if self.fsm is not None:
                if self.fsm.on_close(count, now, self.t.tBackoffSignal):
                    events.append(("backoff_assert", self.fsm.assert_ts))
        elif cmd in (RD, WR):
            bank_idx, row = addr
            b = self.banks[bank_idx]
            if b.open_row != row:
                raise ProtocolError("open-row", 0, f"{cmd} to a row that is not open")
            self._check(b.col_ok, now, "tRCD")
            if cmd == RD:
                b.pre_ok = max(b.pre_ok, now + self.t.tRTP)
            else:
                b.pre_ok = max(b.pre_ok, now + self.t.tWR)
        elif cmd == REF:
            events.extend(self._serve_ref(now))
            self.blocked_until = now + self.t.tRFC
        elif cmd in (RFMAB, RFMSB):
            kind = "all-bank" if cmd == RFMAB else "same-bank"
            triggered = addr[0] if addr is not None else None
            events.extend(self.serve_rfm(kind, addr, triggered_bank=triggered))
            self.blocked_until = now + self.t.tRFM
            if self.fsm is not None:
                self.fsm.on_rfm()
        else:
            raise ConfigError(f"unknown command {cmd!r}")
        self.counts[cmd] += 1
        self._log(now, cmd, addr[0] if addr else -1, addr[1] if addr else -1)
        return events

    # ------------------------------------------------------------- refresh ops

    def _victims(self, row: int) -> list:
        lo = max(0, row - BLAST_RADIUS)
        hi = min(self.topo.rows_per_bank - 1, row + BLAST_RADIUS)
        return [v for v in range(lo, hi + 1) if v != row]

    def serve_rfm(self, kind: str, addr=None, triggered_bank: Optional[int] = None) -> list:
        """Refresh the victims of each selected bank's hottest row.

        Returns ('refreshed', bank, aggressor, victims) events; the aggressor
        report is the attacker feedback channel.
        """
        if kind == "all-bank":
            bank_range = range(len(self.banks))
        elif kind == "same-bank":
            if addr is None:
                raise ConfigError("same-bank RFM needs a bank address")
            target = addr[0] % self.topo.banks_per_bankgroup
            bank_range = [i for i in range(len(self.banks))
                          if i % self.topo.banks_per_bankgroup == target]
        else:
            raise ConfigError(f"unknown RFM kind {kind!r}")
        events = []
        for bi in bank_range:
            b = self.banks[bi]
            if b.counters:
                best = max(b.counters.values())
                rows = [r for r, c in b.counters.items() if c == best]
                aggressor = min(rows) if self.tie_break == "low" else max(rows)
            else:
                aggressor = 0  # deterministic fallback, no-op security-wise
            victims = self._victims(aggressor)
            cleared = b.counters.pop(aggressor, 0)
            self.cleared_counts += cleared
            if self.monitor is not None:
                for v in victims:
                    self.monitor.on_row_refreshed(bi, v)
            events.append(("refreshed", bi, aggressor, tuple(victims)))
        if triggered_bank is not None:
            self.banks[triggered_bank].raa = 0
        return events

    def refresh_rows(self, bank_idx: int, rows) -> None:
        """Targeted row refreshes (controller-side preventive actions)."""
        b = self.banks[bank_idx]
        for r in rows:
            if r in b.counters:
                self.cleared_counts += b.counters.pop(r)
            if self.monitor is not None:
                self.monitor.on_row_refreshed(bank_idx, r)

    def _serve_ref(self, now: int) -> list:
        start = self.ref_pointer
        rows = [(start + i) % self.topo.rows_per_bank for i in range(self.rows_per_ref)]
        self.ref_pointer = (start + self.rows_per_ref) % self.topo.rows_per_bank
        for bi, b in enumerate(self.banks):
            if b.open_row is not None:
                raise ProtocolError("ref-open-row", 0, "REF with an open row")
            for r in rows:
                if self.ref_resets_counters and r in b.counters:
                    self.cleared_counts += b.counters.pop(r)
                if self.monitor is not None:
                    self.monitor.on_row_refreshed(bi, r)
        return [("ref", tuple(rows))]

    # ------------------------------------------------------------- accounting

    def counter_mass(self) -> int:
        return sum(sum(b.counters.values()) for b in self.banks)

    def conservation_holds(self) -> bool:
        closed_acts = self.counts[PRE]   # one increment per ACT/PRE pair
        return closed_acts == (self.counter_mass() + self.cleared_counts
                               + self.saturated_increments)

    def dump_log_csv(self, path):
        if self.log is None:
            raise ConfigError("command logging was not enabled")
        with open(path, "w") as fh:
            fh.write("time_ps,command,rank,bankgroup,bank,row\n")
            for rec in self.log:
                fh.write(",".join(str(x) for x in rec) + "\n")
