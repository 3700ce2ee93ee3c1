"""Command-line frontend: security sweeps, theoretical attack math, trace
generation, simulation campaigns, storage tables, and CSV emission.

Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error,
3 security requirement violated under --require-secure. The PRACSIM_WORKERS
environment variable sets the campaign worker count; output rows are sorted
by key, so the worker count never changes the bytes written.
"""

from __future__ import annotations

import argparse
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict

from . import __version__
from .attack import AttackSpec, gen_perf_attack_trace, gen_wave_trace, theoretical_consumption
from .configfile import RunManifest, parse_config, timing_from_config
from .controller import MemoryController
from .dram import DeviceState, DisturbanceMonitor, Topology
from .metrics import EnergyModel, SimReport, build_report
from .mitigations import (
    Graphene,
    Hydra,
    NoMitigation,
    Para,
    PracN,
    PracOptimistic,
    PracPlusPrfm,
    Prfm,
    graphene_defaults,
    hydra_defaults,
    para_probability,
)
from .security import (
    PracParams,
    PrfmParams,
    SweepGrid,
    is_secure_prac,
    is_secure_prfm,
    secure_abo_th,
    secure_rfm_th,
    sweep,
)
from .timing import ConfigError, preset
from .workloads import (
    StopCondition,
    build_mixes,
    desk_timing,
    gen_synthetic,
    materialize_mix,
    run_cores,
)

SWEEP_HEADER = "mechanism,threshold,b0_or_refs,max_activations,secure_at_nrh,verdict_at_nrh"


def _write_lines(path, lines):
    with open(path, "w", newline="") as fh:
        for line in lines:
            fh.write(line + "\n")


def _gnuplot_stub(csv_path):
    stub = csv_path + ".gp"
    _write_lines(stub, [
        "set datafile separator ','",
        "set key autotitle columnhead",
        f"plot '{os.path.basename(csv_path)}' using 2:4 with linespoints",
    ])
    return stub


# ---------------------------------------------------------------- analyze


def cmd_analyze(args) -> int:
    t = preset(args.preset)
    ths = tuple(args.thresholds) if args.thresholds is not None else None
    if args.mech == "prfm":
        b0s = tuple(args.b0) if args.b0 is not None else SweepGrid("prfm").b0_values
        grid = SweepGrid("prfm", thresholds=ths, b0_values=b0s)
    else:
        refs = tuple(args.bo_n_refs) if args.bo_n_refs is not None else (1, 2, 4)
        grid = SweepGrid("prac", thresholds=ths, bo_n_refs_values=refs,
                         bo_n_acts=args.bo_n_acts)
    rows = sweep(grid, t)
    verdicts = {}
    if args.nrh:
        for th in sorted({r[1] for r in rows}):
            if args.mech == "prfm":
                v = is_secure_prfm(args.nrh, PrfmParams(th), t)
            else:
                v = is_secure_prac(args.nrh, PracParams(th, max(args.bo_n_refs or [4]),
                                                        args.bo_n_acts), t)
            verdicts[th] = "secure" if v.secure else "insecure"
    lines = [SWEEP_HEADER]
    for mech, th, b0r, mx, sec_at in rows:
        lines.append(f"{mech},{th},{b0r},{mx},{sec_at},{verdicts.get(th, '')}")
    out = args.out or f"analyze_{args.mech}.csv"
    _write_lines(out, lines)
    if args.gnuplot_stub:
        _gnuplot_stub(out)
    print(f"wrote {out} ({len(rows)} grid points)")
    if args.require_secure and args.nrh:
        if not any(v == "secure" for v in verdicts.values()):
            print("no grid point is secure at the requested threshold", file=sys.stderr)
            return 3
    return 0


# ---------------------------------------------------------------- attack theory


def cmd_attack_theory(args) -> int:
    t = preset(args.preset)
    rows = []
    for th in args.rfm_th:
        rep = theoretical_consumption(t, PrfmParams(th))
        rows.append(("prfm", args.preset, th, rep))
    for th in args.abo_th:
        rep = theoretical_consumption(t, PracParams(th, args.bo_n_refs, args.bo_n_acts))
        rows.append(("prac", args.preset, th, rep))
    lines = ["mechanism,preset,threshold,t_available_ms,period_ns,t_prevent_ms,"
             "fraction,steady_fraction"]
    for mech, pname, th, rep in rows:
        lines.append(
            f"{mech},{pname},{th},{rep.t_available / 1e9:.6f},"
            f"{rep.t_attack_period / 1e3:.3f},{rep.t_prevent / 1e9:.6f},"
            f"{rep.fraction:.6f},{rep.steady_fraction:.6f}")
    out = args.out or "attack_theory.csv"
    _write_lines(out, lines)
    print(f"wrote {out} ({len(rows)} rows)")
    return 0


# ---------------------------------------------------------------- storage


def cmd_storage(args) -> int:
    from .mitigations import storage_cost
    topo = Topology()
    lines = ["mechanism,n_rh,cpu_bits,dram_bits"]
    for n in args.nrh:
        configs = [
            ("prac", PracN(PracParams(max(n - 4, 1), 4, 1))),
            ("prfm", Prfm(PrfmParams(secure_rfm_th(n, preset("analysis-appendix")) or 1))),
            ("graphene", graphene_defaults(n, topo)),
            ("hydra", hydra_defaults(n, topo)),
            ("para", Para(para_probability(n))),
        ]
        for name, cfg in configs:
            sb = storage_cost(cfg, n, topo)
            lines.append(f"{name},{n},{sb.cpu_bits},{sb.dram_bits}")
    out = args.out or "storage.csv"
    _write_lines(out, lines)
    print(f"wrote {out}")
    return 0


# ---------------------------------------------------------------- gen-traces


def cmd_gen_traces(args) -> int:
    os.makedirs(args.out_dir, exist_ok=True)
    topo = Topology.desk() if args.desk else Topology()
    written = []
    if args.attack == "wave":
        t = preset("ddr5-3200an-prac")
        sec = PracParams(args.abo_th, args.bo_n_refs, args.bo_n_acts)
        spec = AttackSpec("wave", rows_per_bank=args.b0, banks=1,
                          initial_priming=sec.abo_th - 1)
        trace, result = gen_wave_trace(spec, sec, t, topo=topo)
        path = os.path.join(args.out_dir, "wave.trace")
        trace.save(path)
        written.append(path)
        print(f"wave attack: {len(trace)} accesses, realized max "
              f"{result.realized_max} activations")
    elif args.attack == "dos":
        t = preset("ddr5-3200an-prac")
        spec = AttackSpec("perf_degradation", rows_per_bank=args.rows, banks=args.banks)
        trace = gen_perf_attack_trace(spec, t, args.duration, topo=topo)
        path = os.path.join(args.out_dir, "dos.trace")
        trace.save(path)
        written.append(path)
    else:
        for cls in args.classes:
            tr = gen_synthetic(cls, args.seed, args.records, topo=topo)
            path = os.path.join(args.out_dir, f"synthetic_{cls}_{args.seed}.trace")
            tr.save(path)
            written.append(path)
        if args.mixes:
            manifest = os.path.join(args.out_dir, "mix_manifest.csv")
            lines = ["mix,slot,workload_class,member_seed"]
            for mi, mix in enumerate(build_mixes(args.mixes, args.seed)):
                for slot, (cls, ms) in enumerate(zip(mix.classes, mix.member_seeds)):
                    lines.append(f"{mix.name}-{mi},{slot},{cls},{ms}")
            _write_lines(manifest, lines)
            written.append(manifest)
    for p in written:
        print(f"wrote {p}")
    return 0


# ---------------------------------------------------------------- simulate


def _mitigation_for(kind: str, n_rh: int, topo: Topology, sec: dict):
    """Resolve a mechanism name plus threshold overrides into configs."""
    app = preset("analysis-appendix")
    prac_t = preset("ddr5-3200an-prac")
    if kind == "none":
        return NoMitigation(), None, "ddr5-3200an-base"
    if kind == "prfm":
        th = sec.get("rfm_th") or secure_rfm_th(n_rh, app)
        if th is None:
            raise ConfigError(f"no secure rfm_th exists for n_rh={n_rh}")
        return Prfm(PrfmParams(th)), None, "ddr5-3200an-base"
    if kind in ("prac", "prac-optimistic", "prac+prfm"):
        abo = sec.get("abo_th") or secure_abo_th(n_rh, prac_t,
                                                 sec.get("bo_n_refs", 4),
                                                 sec.get("bo_n_acts", 1))
        if abo is None:
            raise ConfigError(f"no secure abo_th exists for n_rh={n_rh}")
        p = PracParams(abo, sec.get("bo_n_refs", 4), sec.get("bo_n_acts", 1))
        prac_cfg = {"abo_th": p.abo_th, "bo_n_refs": p.bo_n_refs,
                    "bo_n_acts": p.bo_n_acts}
        if kind == "prac":
            return PracN(p), prac_cfg, "ddr5-3200an-prac"
        if kind == "prac-optimistic":
            return PracOptimistic(p), prac_cfg, "ddr5-3200an-base"
        th = sec.get("rfm_th") or secure_rfm_th(n_rh, app)
        return PracPlusPrfm(p, PrfmParams(th)), prac_cfg, "ddr5-3200an-prac"
    if kind == "graphene":
        return graphene_defaults(n_rh, topo), None, "ddr5-3200an-base"
    if kind == "hydra":
        return hydra_defaults(n_rh, topo), None, "ddr5-3200an-base"
    if kind == "para":
        return Para(sec.get("probability") or para_probability(n_rh)), None, "ddr5-3200an-base"
    raise ConfigError(f"unknown mitigation kind {kind!r}")


def _simulate_one(payload: dict):
    """One (mix, mechanism) run incl. solo baselines; top level for pickling."""
    topo = Topology.desk() if payload["desk"] else Topology()
    sec = payload["mitigation"]
    kind = sec.get("kind", "none")
    n_rh = sec.get("n_rh", 1024)
    mit, prac_cfg, preset_name = _mitigation_for(kind, n_rh, topo, sec)
    t = preset(payload.get("timing_preset") or preset_name)
    if payload["desk"]:
        t = desk_timing(t)
    mix = build_mixes(payload["mixes"], payload["seed"])[payload["mix_index"]]
    traces = materialize_mix(mix, payload["records"], topo)
    if payload.get("attacker") == "dos":
        spec = AttackSpec("perf_degradation",
                          rows_per_bank=payload.get("attacker_rows", 8),
                          banks=payload.get("attacker_banks", 4))
        cap_ps = payload["max_cycles"] * 238 if payload["max_cycles"] else 10 ** 9
        traces[0] = gen_perf_attack_trace(spec, t, cap_ps + 10_000_000, topo=topo)
    stop = StopCondition(payload["instructions_per_core"], payload["max_cycles"])
    from .mitigations import counter_width
    bits = counter_width(max(n_rh, 2))
    alone = []
    for tr in traces:
        dev = DeviceState(topo, t, prac=prac_cfg, counter_bits=bits)
        ctrl = MemoryController(topo, t, dev, mit, seed=payload["seed"])
        alone.append(max(run_cores([tr], ctrl, stop).ipcs[0], 1e-12))
    monitor = DisturbanceMonitor(n_rh, topo.rows_per_bank)
    dev = DeviceState(topo, t, prac=prac_cfg, monitor=monitor, counter_bits=bits)
    ctrl = MemoryController(topo, t, dev, mit, seed=payload["seed"])
    result = run_cores(traces, ctrl, stop)
    label = f"{mix.name}-{payload['mix_index']}-{kind}-{n_rh}"
    report = build_report(label, payload["seed"], result, alone)
    return label, report.csv_row()


def cmd_simulate(args) -> int:
    cfg = parse_config(args.config)
    wl = cfg.get("workload", {})
    payload_base = {
        "desk": cfg.get("topology", {}).get("desk", True),
        "mitigation": cfg.get("mitigation", {"kind": "none"}),
        "timing_preset": cfg.get("timing", {}).get("preset"),
        "mixes": wl.get("mixes", 6),
        "seed": wl.get("seed", 0),
        "records": wl.get("records", 600),
        "instructions_per_core": wl.get("instructions_per_core", 4000),
        "max_cycles": wl.get("max_cycles", 3_000_000),
        "attacker": wl.get("attacker", "none"),
        "attacker_rows": wl.get("attacker_rows", 8),
        "attacker_banks": wl.get("attacker_banks", 4),
    }
    tasks = [dict(payload_base, mix_index=i) for i in range(payload_base["mixes"])]
    workers = int(os.environ.get("PRACSIM_WORKERS", "1"))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_simulate_one, tasks))
    else:
        results = [_simulate_one(t) for t in tasks]
    results.sort(key=lambda kv: kv[0])
    out_dir = args.out_dir or cfg.get("output", {}).get("dir") or "out"
    os.makedirs(out_dir, exist_ok=True)
    csv_path = os.path.join(out_dir, "reports.csv")
    _write_lines(csv_path, [SimReport.csv_header()] + [row for _, row in results])
    manifest = RunManifest(command="simulate", config=cfg,
                           seed=payload_base["seed"],
                           preset_name=payload_base["timing_preset"] or "per-mechanism",
                           outputs=[csv_path])
    man_path = os.path.join(out_dir, "manifest.json")
    manifest.save(man_path)
    if cfg.get("output", {}).get("gnuplot_stub"):
        _gnuplot_stub(csv_path)
    print(f"wrote {csv_path} and {man_path}")
    return 0


def cmd_replay(args) -> int:
    manifest = RunManifest.load(args.manifest)
    if manifest.command != "simulate":
        raise ConfigError(f"cannot replay a {manifest.command!r} manifest")

    class _A:
        config = None
        out_dir = args.out_dir

    import json
    import tempfile
    with tempfile.NamedTemporaryFile("w", suffix=".ini", delete=False) as fh:
        for section, kv in manifest.config.items():
            fh.write(f"[{section}]\n")
            for k, v in kv.items():
                fh.write(f"{k} = {str(v)}\n")
        tmp = fh.name
    try:
        _A.config = tmp
        return cmd_simulate(_A)
    finally:
        os.unlink(tmp)


# ---------------------------------------------------------------- entry point


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="pracsim",
                                description="DDR5 activation-counting mitigation "
                                            "simulator and analysis toolkit")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    a = sub.add_parser("analyze", help="security sweep over mechanism configurations")
    a.add_argument("--mech", choices=["prfm", "prac"], required=True)
    a.add_argument("--preset", default="analysis-appendix")
    a.add_argument("--thresholds", type=int, nargs="*", default=None)
    a.add_argument("--b0", type=int, nargs="*", default=None)
    a.add_argument("--bo-n-refs", type=int, nargs="*", default=None)
    a.add_argument("--bo-n-acts", type=int, default=1)
    a.add_argument("--nrh", type=int)
    a.add_argument("--require-secure", action="store_true")
    a.add_argument("--gnuplot-stub", action="store_true")
    a.add_argument("--out")
    a.set_defaults(func=cmd_analyze)

    at = sub.add_parser("attack-theory", help="theoretical throughput consumption")
    at.add_argument("--preset", default="analysis-appendix")
    at.add_argument("--rfm-th", type=int, nargs="*", default=[6])
    at.add_argument("--abo-th", type=int, nargs="*", default=[57])
    at.add_argument("--bo-n-refs", type=int, default=4)
    at.add_argument("--bo-n-acts", type=int, default=4)
    at.add_argument("--out")
    at.set_defaults(func=cmd_attack_theory)

    st = sub.add_parser("storage", help="storage-cost table")
    st.add_argument("--nrh", type=int, nargs="*", default=[1024, 256, 64, 16])
    st.add_argument("--out")
    st.set_defaults(func=cmd_storage)

    g = sub.add_parser("gen-traces", help="emit synthetic or adversarial traces")
    g.add_argument("--out-dir", default="traces")
    g.add_argument("--attack", choices=["wave", "dos", "none"], default="none")
    g.add_argument("--classes", nargs="*", default=["H", "M", "L"])
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--records", type=int, default=1000)
    g.add_argument("--mixes", type=int, default=0)
    g.add_argument("--desk", action="store_true")
    g.add_argument("--b0", type=int, default=8)
    g.add_argument("--abo-th", type=int, default=6)
    g.add_argument("--bo-n-refs", type=int, default=4)
    g.add_argument("--bo-n-acts", type=int, default=1)
    g.add_argument("--rows", type=int, default=8)
    g.add_argument("--banks", type=int, default=4)
    g.add_argument("--duration", type=lambda s: int(s), default=5_000_000)
    g.set_defaults(func=cmd_gen_traces)

    s = sub.add_parser("simulate", help="run a simulation campaign from a config file")
    s.add_argument("--config", required=True)
    s.add_argument("--out-dir", default=None)
    s.set_defaults(func=cmd_simulate)

    r = sub.add_parser("replay", help="re-run a campaign from its manifest")
    r.add_argument("manifest")
    r.add_argument("--out-dir", default=None)
    r.set_defaults(func=cmd_replay)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code not in (0, None) else 0
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
