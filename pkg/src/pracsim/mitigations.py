"""Reference mitigations and the storage-cost model.

Controller-side mechanisms (frequent-item counting, DRAM-resident counters
with an on-chip cache, probabilistic neighbor refresh) share one interface:
on_activation() returns either nothing or a preventive-refresh action naming
the victim rows to refresh. The in-DRAM mechanisms (per-row counting with
back-off, periodic refresh management) live in the device model and the
controller; their configs are carried here so one tagged union selects any
mechanism.

Storage constants the original proposals left open are pinned here and noted
inline; every one of them is overridable through the config file.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from typing import Optional, Union

from .dram import BLAST_RADIUS, Topology
from .security import PracParams, PrfmParams
from .timing import ConfigError, TimingParams, preset


@dataclass(frozen=True)
class NoMitigation:
    name = "none"


@dataclass(frozen=True)
class Prfm:
    params: PrfmParams
    name = "prfm"


@dataclass(frozen=True)
class PracN:
    params: PracParams
    name = "prac"


@dataclass(frozen=True)
class PracPlusPrfm:
    prac: PracParams
    prfm: PrfmParams
    name = "prac+prfm"


@dataclass(frozen=True)
class PracOptimistic:
    """Same policy as PracN but run on unadjusted timing parameters."""
    params: PracParams
    name = "prac-optimistic"


@dataclass(frozen=True)
class Graphene:
    table_entries: int
    threshold: int
    name = "graphene"

    def __post_init__(self):
        if self.table_entries < 1 or self.threshold < 1:
            raise ConfigError("graphene needs positive table_entries and threshold")


@dataclass(frozen=True)
class Hydra:
    gct_entries: int
    rcc_entries: int
    group_threshold: int
    row_threshold: int
    name = "hydra"

    def __post_init__(self):
        if min(self.gct_entries, self.rcc_entries,
               self.group_threshold, self.row_threshold) < 1:
            raise ConfigError("hydra parameters must be positive")


@dataclass(frozen=True)
class Para:
    probability: float
    name = "para"

    def __post_init__(self):
        if not 0.0 < self.probability < 1.0:
            raise ConfigError("para probability must be inside (0, 1)")


MitigationConfig = Union[NoMitigation, Prfm, PracN, PracPlusPrfm, PracOptimistic,
                         Graphene, Hydra, Para]


def para_probability(n_rh: int, escape_exponent: int = 40) -> float:
    """p such that an aggressor escaping n_rh samples has probability 2^-e."""
    return 1.0 - math.exp(math.log(2.0 ** -escape_exponent) / n_rh)


def graphene_defaults(n_rh: int, topo: Topology, t: Optional[TimingParams] = None) -> Graphene:
    """Standard frequent-item sizing: entries >= W / threshold per bank."""
    t = t or preset("ddr5-3200an-base")
    window_acts = (t.tREFW - (t.tREFW // t.tREFI) * t.tRFC) // t.tRC
    threshold = max(n_rh // 4, 1)
    return Graphene(table_entries=-(-window_acts // threshold) + 1, threshold=threshold)


def hydra_defaults(n_rh: int, topo: Topology) -> Hydra:
    gct = min(131_072, max(1024, topo.rows_total // 32))
    rcc = min(4096, max(64, gct // 32))
    # group filter arms at 80% of the per-row tracking threshold
    return Hydra(gct_entries=gct, rcc_entries=rcc,
                 group_threshold=max(2 * n_rh // 5, 1),
                 row_threshold=max(n_rh // 2, 1))


# ---------------------------------------------------------------------------
# runtime state machines


@dataclass(frozen=True)
class Action:
    kind: str                 # "none" | "preventive_refresh" | "require_rfm"
    victims: tuple = ()


NONE_ACTION = Action("none")


def _victims_of(row: int, rows_per_bank: int) -> tuple:
    lo = max(0, row - BLAST_RADIUS)
    hi = min(rows_per_bank - 1, row + BLAST_RADIUS)
    return tuple(v for v in range(lo, hi + 1) if v != row)


class GrapheneState:
    """Per-bank Misra-Gries tables; a tracked row triggers a victim refresh
    every `threshold` activations. Tables reset once per refresh window."""

    def __init__(self, cfg: Graphene, topo: Topology, t: TimingParams):
        self.cfg = cfg
        self.topo = topo
        self.reset_period = t.tREFW
        self.last_reset = 0
        self.tables = [dict() for _ in range(topo.banks_total)]   # row -> count
        self.spill = [0] * topo.banks_total
        self.refreshes = 0

    def on_activation(self, bank: int, row: int, now: int) -> Action:
        if now - self.last_reset >= self.reset_period:
            for tb in self.tables:
                tb.clear()
            self.spill = [0] * self.topo.banks_total
            self.last_reset = now
        table = self.tables[bank]
        if row in table:
            table[row] += 1
        elif len(table) < self.cfg.table_entries:
            table[row] = self.spill[bank] + 1
        else:
            # decrement-all step of the frequent-item sketch
            self.spill[bank] += 1
            dead = [r for r, c in table.items() if c <= self.spill[bank]]
            for r in dead:
                del table[r]
            return NONE_ACTION
        if table[row] - self.spill[bank] >= self.cfg.threshold:
            table[row] = self.spill[bank]
            self.refreshes += 1
            return Action("preventive_refresh", _victims_of(row, self.topo.rows_per_bank))
        return NONE_ACTION


class HydraState:
    """Group counters filter traffic; past the group threshold, per-row
    counters (DRAM-resident, cached on chip) take over. The DRAM copy is
    authoritative, so a cache miss can never undercount."""

    def __init__(self, cfg: Hydra, topo: Topology):
        self.cfg = cfg
        self.topo = topo
        self.groups = {}        # group index -> count
        self.row_counters = {}  # (bank, row) -> count, authoritative
        self.rcc = []           # cached keys, LRU order
        self.rcc_hits = 0
        self.rcc_misses = 0
        self.refreshes = 0
        span = max(1, topo.rows_total // cfg.gct_entries)
        self._span = span

    def _group(self, bank: int, row: int) -> int:
        return (bank * self.topo.rows_per_bank + row) // self._span

    def _touch_cache(self, key):
        if key in self.rcc:
            self.rcc.remove(key)
            self.rcc.append(key)
            self.rcc_hits += 1
        else:
            self.rcc_misses += 1
            self.rcc.append(key)
            if len(self.rcc) > self.cfg.rcc_entries:
                self.rcc.pop(0)   # writeback; the dict copy stays authoritative

    def on_activation(self, bank: int, row: int, now: int) -> Action:
        g = self._group(bank, row)
        gcount = self.groups.get(g, 0)
        if gcount < self.cfg.group_threshold:
            self.groups[g] = gcount + 1
            return NONE_ACTION
        key = (bank, row)
        self._touch_cache(key)
        # first engagement inherits the group count pessimistically
        count = self.row_counters.get(key, self.cfg.group_threshold) + 1
        if count >= self.cfg.row_threshold:
            self.row_counters[key] = 0
            self.refreshes += 1
            return Action("preventive_refresh", _victims_of(row, self.topo.rows_per_bank))
        self.row_counters[key] = count
        return NONE_ACTION


class ParaState:
    """Probabilistic neighbor refresh, reproducible from the run seed."""

    def __init__(self, cfg: Para, topo: Topology, seed: int = 0):
        self.cfg = cfg
        self.topo = topo
        self.rng = random.Random(seed)
        self.refreshes = 0

    def on_activation(self, bank: int, row: int, now: int) -> Action:
        if self.rng.random() < self.cfg.probability:
            step = 1 if self.rng.random() < 0.5 else -1
            victim = min(max(row + step, 0), self.topo.rows_per_bank - 1)
            self.refreshes += 1
            return Action("preventive_refresh", (victim,))
        return NONE_ACTION


def build_mechanism(cfg: MitigationConfig, topo: Topology, t: TimingParams,
                    seed: int = 0):
    """Controller-side state for a config; device-backed mechanisms need none."""
    if isinstance(cfg, Graphene):
        return GrapheneState(cfg, topo, t)
    if isinstance(cfg, Hydra):
        return HydraState(cfg, topo)
    if isinstance(cfg, Para):
        return ParaState(cfg, topo, seed)
    return None


# ---------------------------------------------------------------------------
# storage model


@dataclass(frozen=True)
class StorageBreakdown:
    cpu_bits: int
    dram_bits: int

    @property
    def total_bits(self) -> int:
        return self.cpu_bits + self.dram_bits


def counter_width(n_rh: int) -> int:
    """Saturating per-row counter: threshold bits plus one guard bit."""
    return math.ceil(math.log2(n_rh)) + 1


HYDRA_MIN_COUNTER_BITS = 6   # smallest row-count-cache entry granularity


def storage_cost(mech: MitigationConfig, n_rh: int, topo: Topology,
                 t: Optional[TimingParams] = None) -> StorageBreakdown:
    if n_rh < 2:
        raise ConfigError("storage model needs n_rh >= 2")
    row_bits_bank = math.ceil(math.log2(topo.rows_per_bank))
    row_bits_total = math.ceil(math.log2(topo.rows_total))
    width = counter_width(n_rh)
    if isinstance(mech, NoMitigation):
        return StorageBreakdown(0, 0)
    if isinstance(mech, (PracN, PracOptimistic)):
        return StorageBreakdown(0, topo.rows_total * width)
    if isinstance(mech, Prfm):
        bank_counter = math.ceil(math.log2(mech.params.rfm_th)) + 1
        return StorageBreakdown(topo.banks_total * bank_counter, 0)
    if isinstance(mech, PracPlusPrfm):
        bank_counter = math.ceil(math.log2(mech.prfm.rfm_th)) + 1
        return StorageBreakdown(topo.banks_total * bank_counter,
                                topo.rows_total * width)
    if isinstance(mech, Graphene):
        entry = row_bits_bank + math.ceil(math.log2(mech.threshold + 1))
        return StorageBreakdown(topo.banks_total * mech.table_entries * entry, 0)
    if isinstance(mech, Hydra):
        row_counter = max(width, HYDRA_MIN_COUNTER_BITS)
        gct_width = math.ceil(math.log2(mech.group_threshold)) + 1
        cpu = (mech.gct_entries * gct_width
               + mech.rcc_entries * (row_bits_total + row_counter))
        return StorageBreakdown(cpu, topo.rows_total * row_counter)
    if isinstance(mech, Para):
        return StorageBreakdown(topo.banks_total * 32, 0)   # per-bank LFSR
    raise ConfigError(f"unknown mitigation {mech!r}")
