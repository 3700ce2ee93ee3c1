"""Structured config file (INI sections) and the run manifest.

Unknown sections or keys are hard errors so a typo cannot silently fall back
to a default. Timing overrides accept ns/us/ms suffixes. The manifest
records everything needed to reproduce a run byte-identically: the fully
resolved configuration, seeds, preset names, artifact version and output
paths.
"""

from __future__ import annotations

import configparser
import json
from dataclasses import dataclass, replace
from typing import Optional

from . import __version__
from .timing import ConfigError, TimingParams, parse_duration, preset


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {text!r}")


def _int_list(text: str) -> tuple:
    return tuple(int(x) for x in text.replace(",", " ").split())


_TIMING_FIELDS = ("tRC", "tRAS", "tRP", "tRCD", "tCL", "tRTP", "tWR", "tREFW",
                  "tREFI", "tRFC", "tRFM", "tABO_ACT", "tBO_DELAY",
                  "tBackoffSignal", "clock_period")

SCHEMA = {
    "timing": {"preset": str, "desk_scale": _bool,
               **{f.lower(): parse_duration for f in _TIMING_FIELDS}},
    "topology": {"desk": _bool, "channels": int, "ranks_per_channel": int,
                 "bankgroups_per_rank": int, "banks_per_bankgroup": int,
                 "rows_per_bank": int, "row_size_bytes": int},
    "mitigation": {"kind": str, "n_rh": int, "rfm_th": int, "abo_th": int,
                   "bo_n_refs": int, "bo_n_acts": int, "quantization": float,
                   "probability": float, "table_entries": int, "threshold": int,
                   "gct_entries": int, "rcc_entries": int,
                   "group_threshold": int, "row_threshold": int},
    "workload": {"mixes": int, "seed": int, "records": int,
                 "instructions_per_core": int, "max_cycles": int,
                 "attacker": str, "attacker_rows": int, "attacker_banks": int},
    "attack": {"kind": str, "b0": int, "rows_per_bank": int, "banks": int,
               "initial_priming": int, "duration": parse_duration},
    "output": {"dir": str, "gnuplot_stub": _bool},
}


def parse_config(path: str) -> dict:
    parser = configparser.ConfigParser()
    read = parser.read(path)
    if not read:
        raise ConfigError(f"config file not found: {path}")
    out: dict = {}
    for section in parser.sections():
        if section not in SCHEMA:
            raise ConfigError(
                f"unknown config section [{section}]; valid: {', '.join(SCHEMA)}")
        coercers = SCHEMA[section]
        sec_out = {}
        for key, raw in parser[section].items():
            if key not in coercers:
                raise ConfigError(
                    f"unknown key {key!r} in [{section}]; valid: {', '.join(coercers)}")
            try:
                sec_out[key] = coercers[key](raw)
            except ConfigError:
                raise
            except ValueError as exc:
                raise ConfigError(f"bad value for {section}.{key}: {raw!r} ({exc})") from None
        out[section] = sec_out
    return out


def timing_from_config(cfg: dict) -> TimingParams:
    sec = cfg.get("timing", {})
    t = preset(sec.get("preset", "ddr5-3200an-base"))
    overrides = {f: sec[f.lower()] for f in _TIMING_FIELDS
                 if f.lower() in sec and f != "clock_period"}
    if "clock_period" in sec:
        overrides["clock_period"] = sec["clock_period"]
    if overrides:
        if "tRAS" in overrides or "tRP" in overrides:
            tras = overrides.get("tRAS", t.tRAS)
            trp = overrides.get("tRP", t.tRP)
            overrides.setdefault("tRC", tras + trp)
        t = replace(t, **overrides)
    if sec.get("desk_scale"):
        from .workloads import desk_timing
        t = desk_timing(t)
    return t


@dataclass
class RunManifest:
    command: str
    config: dict
    seed: int
    preset_name: str
    outputs: list
    artifact_version: str = __version__

    def save(self, path: str):
        payload = {
            "artifact_version": self.artifact_version,
            "command": self.command,
            "config": self.config,
            "seed": self.seed,
            "preset_name": self.preset_name,
            "outputs": self.outputs,
        }
        with open(path, "w") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path: str) -> "RunManifest":
        with open(path) as fh:
            payload = json.load(fh)
        return cls(command=payload["command"], config=payload["config"],
                   seed=payload["seed"], preset_name=payload["preset_name"],
                   outputs=payload["outputs"],
                   artifact_version=payload["artifact_version"])
