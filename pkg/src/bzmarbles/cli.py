"""Command line: ``bzmarbles run|calibrate|gate <config> [options]``.

``<config>`` is a YAML file or the name of a shipped preset.
"""
from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

import yaml

from .errors import BZError
from .runner.calibrate import apply_params, calibrate, load_targets
from .runner.config import list_presets, load_config
from .runner.gate import gate_demo, gate_sweep
from .runner.outputs import emit_outputs
from .runner.scenarios import run_scenario

log = logging.getLogger("bzmarbles")


def _common(p: argparse.ArgumentParser):
    p.add_argument("config", help="YAML config file or preset name (%s)" % ", ".join(list_presets()))
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    p.add_argument("--out-dir", type=Path, default=Path("out"), help="output directory (default: ./out)")
    p.add_argument("--frames-every", type=float, default=None, metavar="SECONDS",
                   help="write a PGM frame every SECONDS of simulated time")
    p.add_argument("--threads", type=int, default=1, help="worker threads for the stencil kernel")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bzmarbles", description="BZ liquid-marble array simulator")
    sub = parser.add_subparsers(dest="command", required=True)
    _common(sub.add_parser("run", help="run one scenario and write CSVs, frames and a manifest"))
    cal = sub.add_parser("calibrate", help="fit free parameters to target observables")
    _common(cal)
    cal.add_argument("--targets", type=Path, required=True, help="YAML targets file")
    gate = sub.add_parser("gate", help="truth tables of the T-junction gate at two illuminations")
    _common(gate)
    gate.add_argument("--sweep", action="store_true", help="also tabulate every phi in gate.sweep")
    return parser


def _load(args):
    cfg = load_config(args.config, seed=args.seed)
    if args.frames_every is not None:
        cfg = replace(cfg, output=replace(cfg.output, frames_every_s=args.frames_every))
    return cfg


def cmd_run(args) -> int:
    cfg = _load(args)
    run_log = run_scenario(cfg, threads=args.threads)
    paths = emit_outputs(run_log, args.out_dir)
    s = run_log.statistics
    frac = "n/a" if s["transfer_fraction"] is None else f"{s['transfer_fraction']:.3f}"
    print(f"oscillations={s['n_oscillations']} transfers={s['n_transfers']} fraction={frac} "
          f"longest_pathway={s['max_pathway_length']}")
    print(f"wrote {paths['stats_csv']}, {paths['events_csv']}, {paths['manifest']} and {len(paths['frames'])} frames")
    return 0


def cmd_calibrate(args) -> int:
    cfg = _load(args)
    spec = load_targets(args.targets)
    report = calibrate(cfg, threads=args.threads, **spec)
    args.out_dir.mkdir(parents=True, exist_ok=True)
    rep_path = args.out_dir / "calibration.yaml"
    cfg_path = args.out_dir / "calibrated_config.yaml"
    rep_path.write_text(yaml.safe_dump(report.to_dict(), sort_keys=False), encoding="utf-8")
    cfg_path.write_text(apply_params(cfg, report.params).to_yaml(), encoding="utf-8")
    status = "converged" if report.converged else f"NOT converged ({report.message})"
    print(f"calibration {status} after {report.n_evaluations} evaluations: {report.params}")
    print(f"measured {report.measured}; wrote {rep_path} and {cfg_path}")
    return 0


def cmd_gate(args) -> int:
    cfg = _load(args)
    if cfg.scenario != "gate":
        raise BZError(f"gate needs a config with scenario 'gate', got {cfg.scenario!r}")
    report = gate_demo(cfg, threads=args.threads)
    lines = [report.format()]
    if args.sweep:
        tables, pairs = gate_sweep(cfg, threads=args.threads)
        for phi, table in tables.items():
            lines.append(f"phi={phi:g}: " + " ".join(f"{a}{b}->{o}" for (a, b), o in table.items()))
        lines.append(f"differing pairs: {[(p.phi_low, p.phi_high) for p in pairs]}")
    text = "\n".join(lines) + "\n"
    args.out_dir.mkdir(parents=True, exist_ok=True)
    (args.out_dir / "gate_report.txt").write_text(text, encoding="utf-8")
    print(text, end="")
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    handler = {"run": cmd_run, "calibrate": cmd_calibrate, "gate": cmd_gate}[args.command]
    try:
        return handler(args)
    except (BZError, OSError) as exc:
        print(f"bzmarbles {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
