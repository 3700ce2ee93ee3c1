"""Memory-controller model: request queues, FR-FCFS with a cap on
column-over-row reordering, open-page policy, strict periodic refresh,
refresh-management issuance and back-off deadline handling.

Address interleaving follows the minimalist open-page idea: a short run of
consecutive cache blocks stays in one row, then the stream stripes across
bank groups, banks and ranks before touching the next column group. Bit
layout, from least significant block bit upward:

    [mop offset] [bankgroup] [bank] [rank] [channel] [column high] [row]

The layout is fixed and documented so runs are reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from .dram import ACT, PRE, RD, REF, RFMAB, WR, DeviceState, Topology
from .mitigations import Action, MitigationConfig, NoMitigation, PracPlusPrfm, Prfm, build_mechanism
from .timing import ConfigError, TimingParams

BLOCK_BYTES = 64
BURST_PS = 5000   # BL16 on a 3200 MT/s bus


@dataclass(frozen=True)
class ControllerConfig:
    read_queue_depth: int = 64
    write_queue_depth: int = 64
    frfcfs_cap: int = 4
    mop_group_blocks: int = 4
    drain_high: int = 56       # begin draining writes at 7/8 of the queue
    drain_low: int = 16        # stop at 1/4

    def __post_init__(self):
        if self.frfcfs_cap < 1 or self.read_queue_depth < 1 or self.write_queue_depth < 1:
            raise ConfigError("queue depths and the reorder cap must be >= 1")
        if self.mop_group_blocks < 1 or (self.mop_group_blocks & (self.mop_group_blocks - 1)):
            raise ConfigError("mop_group_blocks must be a power of two")


def map_address(topo: Topology, address: int, cfg: Optional[ControllerConfig] = None):
    """Byte address -> (channel, rank, bankgroup, bank, row, column block)."""
    cfg = cfg or ControllerConfig()
    blocks_per_row = topo.row_size_bytes // BLOCK_BYTES
    capacity = topo.rows_total * topo.row_size_bytes
    if not 0 <= address < capacity:
        raise ConfigError(f"address {address:#x} outside capacity {capacity:#x}")
    block = address // BLOCK_BYTES
    group = cfg.mop_group_blocks
    off = block % group
    block //= group
    bg = block % topo.bankgroups_per_rank
    block //= topo.bankgroups_per_rank
    bank = block % topo.banks_per_bankgroup
    block //= topo.banks_per_bankgroup
    rank = block % topo.ranks_per_channel
    block //= topo.ranks_per_channel
    channel = block % topo.channels
    block //= topo.channels
    col_groups = blocks_per_row // group
    col_high = block % col_groups
    row = block // col_groups
    return channel, rank, bg, bank, row, col_high * group + off


def inverse_map_address(topo: Topology, channel: int, rank: int, bankgroup: int,
                        bank: int, row: int, column: int,
                        cfg: Optional[ControllerConfig] = None) -> int:
    cfg = cfg or ControllerConfig()
    group = cfg.mop_group_blocks
    blocks_per_row = topo.row_size_bytes // BLOCK_BYTES
    col_groups = blocks_per_row // group
    off, col_high = column % group, column // group
    block = row
    block = block * col_groups + col_high
    block = block * topo.channels + channel
    block = block * topo.ranks_per_channel + rank
    block = block * topo.banks_per_bankgroup + bank
    block = block * topo.bankgroups_per_rank + bankgroup
    block = block * group + off
    return block * BLOCK_BYTES


@dataclass
class Request:
    req_id: int
    core: int
    arrival: int
    is_write: bool
    bank_idx: int
    row: int
    column: int
    bypassed: int = 0


class DeadlineOverrun(AssertionError):
    """Recovery RFMs missed the back-off deadline: a scheduler bug."""


class MemoryController:
    """Single-channel controller driving one DeviceState."""

    def __init__(self, topo: Topology, t: TimingParams, device: DeviceState,
                 mitigation: MitigationConfig = NoMitigation(),
                 cfg: Optional[ControllerConfig] = None, seed: int = 0):
        if topo.channels != 1:
            raise ConfigError("one controller drives one channel")
        self.topo = topo
        self.t = t
        self.cfg = cfg or ControllerConfig()
        self.dev = device
        self.mitigation = mitigation
        self.prfm_th = None
        if isinstance(mitigation, Prfm):
            self.prfm_th = mitigation.params.rfm_th
        elif isinstance(mitigation, PracPlusPrfm):
            self.prfm_th = mitigation.prfm.rfm_th
        self.mech = build_mechanism(mitigation, topo, t, seed)
        self.read_q: list = []
        self.write_q: list = []
        self.bank_q: dict = {}          # bank_idx -> [Request] in arrival order
        self.draining = False
        self.next_ref = t.tREFI
        self.cmd_bus_free = 0
        self.data_bus_free = 0
        self.bank_busy_extra: dict = {}  # preventive refreshes occupy the bank
        self.completions: list = []      # (time, Request), reads only
        self.bo_deadline: Optional[int] = None
        self.min_deadline_slack: Optional[int] = None
        self.stat = {"acts": 0, "reads": 0, "writes": 0, "rfms": 0,
                     "refs": 0, "backoffs": 0, "preventive_refreshes": 0}
        self.read_latencies: list = []
        self._next_id = 0
        self._choice_cache: dict = {}    # bank_idx -> (local_ready, cmd, req) | None

    # ------------------------------------------------------------- queue side

    def can_accept(self, is_write: bool) -> bool:
        q = self.write_q if is_write else self.read_q
        depth = self.cfg.write_queue_depth if is_write else self.cfg.read_queue_depth
        return len(q) < depth

    def enqueue(self, core: int, address: int, is_write: bool, now: int) -> Request:
        if not self.can_accept(is_write):
            raise ConfigError("enqueue on a full queue; call can_accept first")
        _, rank, bg, bank, row, col = map_address(self.topo, address, self.cfg)
        bank_idx = self.dev.bank_index(rank, bg, bank)
        req = Request(self._next_id, core, now, is_write, bank_idx, row, col)
        self._next_id += 1
        if is_write:
            self.write_q.append(req)
        else:
            if not self.read_q:
                self._choice_cache.clear()   # write eligibility flips everywhere
            self.read_q.append(req)
        self.bank_q.setdefault(bank_idx, []).append(req)
        self._choice_cache.pop(bank_idx, None)
        return req

    def pending(self) -> int:
        return len(self.read_q) + len(self.write_q)

    # --------------------------------------------------------- device helpers

    def _handle_events(self, events):
        for ev in events:
            if ev[0] == "backoff_assert":
                self.bo_deadline = ev[1] + self.t.tABO_ACT
                self.stat["backoffs"] += 1

    def _close_row(self, bank_idx: int, at: int) -> int:
        b = self.dev.banks[bank_idx]
        pre_at = max(at, b.pre_ok, self.cmd_bus_free, self.dev.blocked_until)
        self._handle_events(self.dev.issue(PRE, (bank_idx, b.open_row), pre_at))
        self.cmd_bus_free = pre_at + self.t.clock_period
        self._choice_cache.pop(bank_idx, None)
        return pre_at

    def _close_all_rows(self, at: int) -> int:
        t = at
        for bank_idx, b in enumerate(self.dev.banks):
            if b.open_row is not None:
                t = max(t, self._close_row(bank_idx, t))
        return t

    def _issue_ref(self, at: int):
        at = self._close_all_rows(at)
        fsm = self.dev.fsm
        if fsm is not None and fsm.phase in ("window", "recovery"):
            # closing rows for refresh pushed a counter over the threshold;
            # the recovery cannot wait out a whole tRFC, so it goes first
            at = max(at, self._serve_recovery(at))
        at = max(at, self.dev.blocked_until, self.cmd_bus_free)
        self._handle_events(self.dev.issue(REF, None, at))
        self.stat["refs"] += 1
        self.next_ref += self.t.tREFI
        self.cmd_bus_free = at + self.t.clock_period

    def _issue_rfm(self, at: int, triggered_bank: Optional[int] = None) -> int:
        at = self._close_all_rows(at)
        at = max(at, self.dev.blocked_until, self.cmd_bus_free)
        addr = (triggered_bank, -1) if triggered_bank is not None else None
        self._handle_events(self.dev.issue(RFMAB, addr, at))
        self.stat["rfms"] += 1
        self.cmd_bus_free = at + self.t.clock_period
        return at

    # ------------------------------------------------------------- scheduling

    def _update_drain_mode(self):
        before = self.draining
        if len(self.write_q) >= self.cfg.drain_high:
            self.draining = True
        elif self.draining and len(self.write_q) <= self.cfg.drain_low:
            self.draining = False
        if self.draining != before:
            self._choice_cache.clear()

    def _eligible(self, req: Request) -> bool:
        if req.is_write:
            return self.draining or not self.read_q
        return True

    def _bank_choice(self, bank_idx: int):
        """FR-FCFS+Cap within one bank: hits first until the oldest waiting
        row-miss has been bypassed frfcfs_cap times. Returns the bank-local
        (ready, cmd, req) triple, ignoring channel-global constraints."""
        cached = self._choice_cache.get(bank_idx, False)
        if cached is not False:
            return cached
        queue = self.bank_q.get(bank_idx)
        choice = None
        b = self.dev.banks[bank_idx]
        open_row = b.open_row
        oldest = None
        hit = None
        if queue:
            for r in queue:
                if not self._eligible(r):
                    continue
                if oldest is None:
                    oldest = r
                if open_row is not None and hit is None and r.row == open_row:
                    hit = r
                if hit is not None and oldest is not None:
                    break
        if oldest is not None:
            req = oldest
            if (hit is not None and not (oldest.row != open_row
                                         and oldest.bypassed >= self.cfg.frfcfs_cap)):
                req = hit
            if open_row == req.row:
                choice = (b.col_ok, WR if req.is_write else RD, req)
            elif open_row is None:
                choice = (b.act_ok, ACT, req)
            else:
                choice = (b.pre_ok, PRE, req)
        self._choice_cache[bank_idx] = choice
        return choice

    def _window_allows(self, cmd: str, at: int) -> bool:
        """A command fits the service window only if the bank can be back in
        a precharged state by the deadline: the last ACT may issue no later
        than deadline - tRC, and closing every bank costs one command-bus hop
        each ahead of the recovery RFM."""
        fsm = self.dev.fsm
        if fsm is None or fsm.phase != "window" or self.bo_deadline is None:
            return True
        tail = {ACT: self.t.tRC, RD: self.t.tRTP, WR: self.t.tWR}.get(cmd, 0)
        margin = (self.topo.banks_total + 2) * self.t.clock_period
        if at + tail + margin > self.bo_deadline:
            return False
        if cmd == ACT and fsm.window_left <= 0:
            return False
        return True

    def _candidates(self, now: int):
        floor_t = max(now, self.dev.blocked_until, self.cmd_bus_free)
        out = []
        for bank_idx in sorted(self.bank_q):
            choice = self._bank_choice(bank_idx)
            if choice is None:
                continue
            local, cmd, req = choice
            at = max(local, floor_t, self.bank_busy_extra.get(bank_idx, 0))
            if cmd in (RD, WR):
                at = max(at, self.data_bus_free)
            if not self._window_allows(cmd, at):
                continue
            out.append((at, 0 if cmd in (RD, WR) else 1, req.arrival, req.req_id, cmd, req))
        # an activation that would first fire an all-bank RFM (closing every
        # open row) waits while any column access is still pending
        if self.prfm_th is not None and any(c[4] in (RD, WR) for c in out):
            out = [c for c in out
                   if not (c[4] == ACT
                           and self.dev.banks[c[5].bank_idx].raa >= self.prfm_th)]
        return out

    def _in_recovery(self) -> bool:
        return self.dev.fsm is not None and self.dev.fsm.phase == "recovery"

    def _serve_recovery(self, now: int) -> int:
        """Issue the recovery RFMs back to back; the first must start by the
        back-off deadline."""
        fsm = self.dev.fsm
        first = True
        while fsm.phase in ("window", "recovery"):
            at = self._issue_rfm(now)
            if first and self.bo_deadline is not None:
                slack = self.bo_deadline - at
                if slack < 0:
                    raise DeadlineOverrun(
                        f"recovery RFM at {at} ps missed deadline {self.bo_deadline} ps")
                if self.min_deadline_slack is None or slack < self.min_deadline_slack:
                    self.min_deadline_slack = slack
                first = False
            now = at + self.t.tRFM
        self.bo_deadline = None
        return now

    def _apply_action(self, action: Action, bank_idx: int, at: int):
        if action.kind != "preventive_refresh":
            return
        # targeted victim refreshes occupy the bank for tRC per victim row
        busy_until = at + len(action.victims) * self.t.tRC
        self.bank_busy_extra[bank_idx] = max(
            self.bank_busy_extra.get(bank_idx, 0), busy_until)
        self.dev.refresh_rows(bank_idx, action.victims)
        self.stat["preventive_refreshes"] += 1

    def _finish(self, req: Request, done_at: int):
        self.bank_q[req.bank_idx].remove(req)
        if not self.bank_q[req.bank_idx]:
            del self.bank_q[req.bank_idx]
        self._choice_cache.pop(req.bank_idx, None)
        if req.is_write:
            self.write_q.remove(req)
            self.stat["writes"] += 1
        else:
            self.read_q.remove(req)
            if not self.read_q:
                self._choice_cache.clear()   # writes become eligible everywhere
            self.stat["reads"] += 1
            self.read_latencies.append(done_at - req.arrival)
            self.completions.append((done_at, req))

    # ------------------------------------------------------------- main hooks

    def step(self, now: int) -> int:
        """Run everything due at `now`; returns the next time work exists."""
        self._update_drain_mode()
        while True:
            if self._in_recovery():
                now = max(now, self._serve_recovery(now))
                continue
            if now >= self.next_ref:
                fsm = self.dev.fsm
                if fsm is not None and fsm.phase == "window":
                    # an open back-off window cannot absorb a whole tRFC
                    now = max(now, self._serve_recovery(now))
                self._issue_ref(self.next_ref)
                continue
            candidates = self._candidates(now)
            fsm = self.dev.fsm
            if (fsm is not None and fsm.phase == "window" and self.bo_deadline is not None
                    and (not candidates or min(c[0] for c in candidates) > self.bo_deadline)):
                # nothing more can be served inside the window: recover early
                now = max(now, self._serve_recovery(now))
                continue
            if not candidates:
                return self.next_ref
            candidates.sort()
            at, _, _, _, cmd, req = candidates[0]
            if at > now:
                return min(at, self.next_ref)
            self._execute(cmd, req, at)
            self._update_drain_mode()

    def _execute(self, cmd: str, req: Request, at: int):
        b = self.dev.banks[req.bank_idx]
        if cmd == PRE:
            self._close_row(req.bank_idx, at)
        elif cmd == ACT:
            if self.prfm_th is not None and b.raa >= self.prfm_th:
                # periodic refresh management fires before the next activation
                self._issue_rfm(at, triggered_bank=req.bank_idx)
                return
            self._handle_events(self.dev.issue(ACT, (req.bank_idx, req.row), at))
            self.stat["acts"] += 1
            self.cmd_bus_free = at + self.t.clock_period
            self._choice_cache.pop(req.bank_idx, None)
            if self.mech is not None:
                self._apply_action(self.mech.on_activation(req.bank_idx, req.row, at),
                                   req.bank_idx, at)
        else:  # RD / WR
            self._handle_events(self.dev.issue(cmd, (req.bank_idx, req.row), at))
            self.cmd_bus_free = at + self.t.clock_period
            # consecutive column commands keep their bursts apart on the bus
            self.data_bus_free = at + BURST_PS
            oldest = next((r for r in self.bank_q[req.bank_idx] if self._eligible(r)), None)
            if oldest is not None and oldest is not req and oldest.row != req.row:
                oldest.bypassed += 1
            self._finish(req, at + self.t.tCL + BURST_PS)
