"""Weighted speedup, per-command energy accounting, latency percentiles,
slowdown statistics and report assembly.

The energy model is a flat per-command table plus background power, loaded
from the packaged defaults (data/energy_ddr5.ini) or any file with the same
sections. It deliberately replaces a current-waveform model; every energy
claim made by the test suite is directional, never absolute.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field
from importlib import resources
from typing import Optional

from .timing import ConfigError
from .workloads import CPU_CYCLE_PS, RunResult

PERCENTILES = (50, 90, 95, 99, 100)


def weighted_speedup(shared_ipcs, alone_ipcs) -> float:
    if len(shared_ipcs) != len(alone_ipcs):
        raise ConfigError("shared and alone IPC lists must match")
    if any(a <= 0 for a in alone_ipcs):
        raise ConfigError("alone IPC must be positive")
    return sum(s / a for s, a in zip(shared_ipcs, alone_ipcs))


@dataclass(frozen=True)
class EnergyModel:
    per_command_pj: dict          # command class -> picojoules
    background_mw: float          # milliwatts; 1 mW = 1e-3 pJ/ns

    def command_energy(self, cmd: str) -> float:
        try:
            return self.per_command_pj[cmd]
        except KeyError:
            raise ConfigError(f"energy model has no entry for command {cmd!r}") from None

    @classmethod
    def load(cls, path: Optional[str] = None) -> "EnergyModel":
        parser = configparser.ConfigParser()
        if path is None:
            text = resources.files("pracsim.data").joinpath("energy_ddr5.ini").read_text()
            parser.read_string(text)
        else:
            with open(path) as fh:
                parser.read_file(fh)
        names = {"act": "ACT", "pre": "PRE", "rd": "RD", "wr": "WR",
                 "ref": "REF", "rfmab": "RFMab", "rfmsb": "RFMsb",
                 "preventive": "preventive"}
        per_cmd = {}
        for k, v in parser["per_command_pj"].items():
            if k not in names:
                raise ConfigError(f"unknown command class {k!r} in energy model")
            per_cmd[names[k]] = float(v)
        bg = float(parser["background"]["power_mw"])
        return cls(per_cmd, bg)


def energy(command_counts: dict, model: EnergyModel, runtime_ps: int) -> float:
    """Sum of per-command energies plus background power over the runtime, pJ."""
    dynamic = sum(count * model.command_energy(cmd)
                  for cmd, count in command_counts.items())
    background = model.background_mw * 1e-3 * (runtime_ps / 1000.0)  # mW * ns
    return dynamic + background


def latency_percentiles(latencies) -> dict:
    if not latencies:
        return {p: 0 for p in PERCENTILES}
    ordered = sorted(latencies)
    out = {}
    for p in PERCENTILES:
        idx = min(len(ordered) - 1, max(0, -(-p * len(ordered) // 100) - 1))
        out[p] = ordered[idx]
    return out


@dataclass
class SimReport:
    label: str
    seed: int
    shared_ipcs: list
    alone_ipcs: list
    weighted_speedup: float
    instructions: list
    cycles: int
    energy_pj: float
    command_counts: dict
    preventive_refreshes: int
    backoffs: int
    latency_ps: dict
    max_row_activation_between_refreshes: int
    min_deadline_slack: Optional[int]

    CSV_FIELDS = ("label", "seed", "weighted_speedup", "cycles", "energy_pj",
                  "acts", "pres", "reads", "writes", "refs", "rfms",
                  "preventive_refreshes", "backoffs",
                  "lat_p50", "lat_p90", "lat_p95", "lat_p99", "lat_max",
                  "max_row_activation", "min_deadline_slack",
                  "ipc0", "ipc1", "ipc2", "ipc3")

    def csv_row(self) -> str:
        cc = self.command_counts
        ipcs = list(self.shared_ipcs) + [0.0] * (4 - len(self.shared_ipcs))
        vals = [self.label, self.seed, f"{self.weighted_speedup:.6f}", self.cycles,
                f"{self.energy_pj:.3f}",
                cc.get("ACT", 0), cc.get("PRE", 0), cc.get("RD", 0), cc.get("WR", 0),
                cc.get("REF", 0), cc.get("RFMab", 0) + cc.get("RFMsb", 0),
                self.preventive_refreshes, self.backoffs,
                self.latency_ps[50], self.latency_ps[90], self.latency_ps[95],
                self.latency_ps[99], self.latency_ps[100],
                self.max_row_activation_between_refreshes,
                -1 if self.min_deadline_slack is None else self.min_deadline_slack]
        vals += [f"{v:.6f}" for v in ipcs[:4]]
        return ",".join(str(v) for v in vals)

    @classmethod
    def csv_header(cls) -> str:
        return ",".join(cls.CSV_FIELDS)


def build_report(label: str, seed: int, result: RunResult, alone_ipcs,
                 model: Optional[EnergyModel] = None) -> SimReport:
    model = model or EnergyModel.load()
    counts = dict(result.device_counts)
    counts["preventive"] = result.preventive_refreshes
    e = energy(counts, model, result.end_ps)
    ws = weighted_speedup(result.ipcs, alone_ipcs)
    return SimReport(
        label=label, seed=seed,
        shared_ipcs=list(result.ipcs), alone_ipcs=list(alone_ipcs),
        weighted_speedup=ws,
        instructions=list(result.instructions),
        cycles=result.end_ps // CPU_CYCLE_PS,
        energy_pj=e,
        command_counts=dict(result.device_counts),
        preventive_refreshes=result.preventive_refreshes,
        backoffs=result.backoffs,
        latency_ps=latency_percentiles(result.read_latencies),
        max_row_activation_between_refreshes=result.max_pair_disturbance,
        min_deadline_slack=result.min_deadline_slack,
    )


@dataclass(frozen=True)
class SlowdownStats:
    avg_ws_loss_pct: float
    max_ws_loss_pct: float
    max_single_app_slowdown_pct: float


def slowdown_stats(baseline: list, treated: list) -> SlowdownStats:
    """Percentage weighted-speedup losses and the worst per-core IPC ratio
    across matched (same label) report pairs."""
    if len(baseline) != len(treated):
        raise ConfigError("mismatched report lists")
    losses = []
    worst_app = 0.0
    for b, tr in zip(baseline, treated):
        if b.label != tr.label:
            raise ConfigError(f"mismatched mixes: {b.label} vs {tr.label}")
        losses.append(100.0 * (1.0 - tr.weighted_speedup / b.weighted_speedup))
        for bi, ti in zip(b.shared_ipcs, tr.shared_ipcs):
            if bi > 0:
                worst_app = max(worst_app, 100.0 * (1.0 - ti / bi))
    return SlowdownStats(
        avg_ws_loss_pct=sum(losses) / len(losses),
        max_ws_loss_pct=max(losses),
        max_single_app_slowdown_pct=worst_app,
    )
