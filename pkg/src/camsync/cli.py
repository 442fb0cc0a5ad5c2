"""Command-line entry point: ``camsync``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import harness
from .clocksync import MEAN, MIN, FilterConfig, SyncError, TransportTimeout, apply_filter, write_samples_csv
from .config import ExperimentConfig, bundled_config, bundled_names, load_config
from .transport import UdpClientTransport, leader_serve, parse_address

PRESETS = ("table1", "table2", "table3", "fig5", "fig6", "wedge", "convergence", "timing", "align")

# bundled config each preset runs when --config is not given
PRESET_CONFIGS = {"table3": "table3", "fig5": "table3", "wedge": "table3", "convergence": "table3"}


def _config(args) -> ExperimentConfig:
    if args.config is None:
        cfg = bundled_config(PRESET_CONFIGS.get(getattr(args, "preset", None), "default"))
    elif Path(args.config).exists():
        cfg = load_config(args.config)
    elif args.config in bundled_names():
        cfg = bundled_config(args.config)
    else:
        raise SystemExit(f"no such config file or bundled config: {args.config}")
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.trials is not None:
        changes["trials"] = args.trials
    if getattr(args, "workers", None):
        changes["workers"] = args.workers
    return cfg.replace(**changes) if changes else cfg


def _write(out: Path | None, name: str, text: str) -> None:
    if out is None:
        sys.stdout.write(text)
        return
    out.mkdir(parents=True, exist_ok=True)
    (out / name).write_text(text)


def _json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def cmd_simulate(args) -> int:
    cfg = _config(args)
    out = Path(args.out) if args.out else None
    if args.preset is None:
        result = harness.run_batch(cfg, out)
        if out is None:
            sys.stdout.write(_json(result["summary"]))
        return 0
    preset = args.preset
    if preset == "table1":
        ours = harness.run_batch(cfg)["summary"]["total"]
        rows = {"ours": ours}
        for mode in ("wired", "bluetooth", "wifi"):
            naive = bundled_config(f"naive_{mode}").replace(seed=cfg.seed)
            rows[f"naive_{mode}"] = harness.run_batch(naive)["summary"]["total"]
        _write(out, "table1.json", _json(rows))
    elif preset in ("table2", "fig6"):
        result = harness.run_batch(cfg)
        key, name = ("summary", "table2.json") if preset == "table2" else ("histograms", "fig6.json")
        _write(out, name, _json(result[key]))
    elif preset == "table3":
        _write(out, "table3.json", _json(harness.table3(cfg, max(cfg.samples, 300))))
    elif preset == "fig5":
        rows = harness.one_way_histogram(cfg)
        text = "bin_start_ns,leader_to_client,client_to_leader\n" + "".join(f"{a},{b},{c}\n" for a, b, c in rows)
        _write(out, "fig5.csv", text)
    elif preset == "wedge":
        samples, _ = harness.handshake_log(cfg, 10_000)
        wedge = harness.wedge_scattergram(samples)
        _write(out, "wedge.csv", harness.wedge_csv(wedge))
        _write(out, "wedge_quartiles.json", _json({"quartiles": wedge["quartiles"], "apex": wedge["apex"]}))
    elif preset == "convergence":
        samples, _ = harness.handshake_log(cfg, cfg.samples)
        _write(out, "convergence.csv", harness.convergence_csv(harness.convergence_curve(samples)))
    elif preset == "align":
        _write(out, "align.json", _json(harness.alignment_conventions(cfg)))
    elif preset == "timing":
        _write(out, "timing.json", _json(harness.rig_timing_report(cfg)))
    return 0


def cmd_sync_leader(args) -> int:
    server = leader_serve(parse_address(args.bind))
    host, port = server.address
    print(f"leader listening on {host}:{port}", flush=True)
    try:
        while True:
            server._thread.join(timeout=1.0)
            if not server._thread.is_alive():
                break
    except KeyboardInterrupt:
        pass
    finally:
        server.stop()
        print(f"answered {server.answered} probes, discarded {server.discarded}")
    return 0


def cmd_sync_client(args) -> int:
    cfg = FilterConfig(kind=args.filter, samples=args.samples, outlier_threshold=int(args.outlier_ms * 1e6))
    samples = []
    failures = 0
    with UdpClientTransport(args.leader, timeout=args.timeout) as tr:
        while len(samples) < args.samples:
            try:
                samples.append(tr.exchange())
            except TransportTimeout as exc:
                failures += 1
                if failures > args.max_failures:
                    print(f"error: {exc}", file=sys.stderr)
                    return 2
    if args.samples_csv:
        with open(args.samples_csv, "w", newline="") as fh:
            write_samples_csv(samples, fh)
    try:
        est = apply_filter(samples, cfg)
    except SyncError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    phis = np.array([s.phi for s in samples])
    print(_json({
        "filter": est.filter, "theta_ns": est.theta, "phi_ns": est.phi, "samples_used": est.samples_used,
        "exchanges": len(samples), "timeouts": failures, "mean_phi_ns": float(phis.mean()),
    }), end="")
    return 0


def _run_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help=f"config file or bundled name ({', '.join(bundled_names())})")
    p.add_argument("--seed", type=int)
    p.add_argument("--trials", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--out", help="output directory (stdout if omitted)")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="camsync", description="Camera-rig clock sync and phase alignment")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run seeded simulation trials or a table/figure preset")
    _run_args(sim)
    sim.add_argument("--preset", choices=PRESETS)
    sim.set_defaults(func=cmd_simulate)
    # each preset is also a subcommand: `camsync table2` == `camsync simulate --preset table2`
    for name in PRESETS:
        pre = sub.add_parser(name, help=f"same as simulate --preset {name}")
        _run_args(pre)
        pre.set_defaults(func=cmd_simulate, preset=name)

    lead = sub.add_parser("sync-leader", help="answer sync probes over UDP")
    lead.add_argument("--bind", default="0.0.0.0:9123", help="ADDR:PORT")
    lead.set_defaults(func=cmd_sync_leader)

    cl = sub.add_parser("sync-client", help="estimate this host's offset to a leader")
    cl.add_argument("--leader", required=True, help="ADDR:PORT")
    cl.add_argument("--samples", type=int, default=300)
    cl.add_argument("--filter", choices=(MEAN, MIN), default=MIN)
    cl.add_argument("--outlier-ms", type=float, default=10.0)
    cl.add_argument("--timeout", type=float, default=1.0, help="seconds per exchange")
    cl.add_argument("--max-failures", type=int, default=10)
    cl.add_argument("--samples-csv", help="write raw handshakes here")
    cl.set_defaults(func=cmd_sync_client)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
