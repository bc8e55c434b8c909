"""Illumination-switched logic on a four-marble T-junction.

Marbles 0 and 2 are the inputs, 1 the junction between them and 3 the output
hanging off the junction.  An input set to 1 is stimulated at its outer rim
at ``input_time_s``; the output reads 1 when marble 3 produces a wave within
``read_window_s``.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, replace

from .config import ExperimentConfig, KineticsConfig, StimulusConfig
from .scenarios import run_scenario

__all__ = ["INPUTS", "OUTPUT", "GateReport", "truth_table", "gate_demo", "gate_sweep"]

INPUTS = (0, 2)
OUTPUT = 3
COMBOS = tuple(itertools.product((0, 1), repeat=2))


@dataclass(frozen=True)
class GateReport:
    phi_low: float
    phi_high: float
    table_low: dict
    table_high: dict

    @property
    def tables_differ(self) -> bool:
        return self.table_low != self.table_high

    def format(self) -> str:
        lines = ["a b | out(phi_low={:g}) out(phi_high={:g})".format(self.phi_low, self.phi_high)]
        for a, b in COMBOS:
            lines.append(f"{a} {b} | {self.table_low[(a, b)]:>15d} {self.table_high[(a, b)]:>16d}")
        lines.append(f"tables differ: {self.tables_differ}")
        return "\n".join(lines)


def _with_phi(cfg: ExperimentConfig, phi: float) -> ExperimentConfig:
    overrides = dict(cfg.kinetics.overrides)
    overrides["phi"] = float(phi)
    return replace(cfg, kinetics=KineticsConfig(cfg.kinetics.preset, overrides))


def _input_stimuli(cfg: ExperimentConfig, a: int, b: int) -> tuple:
    g = cfg.gate
    out = []
    # the outer rims face away from the junction
    for bit, marble, angle in ((a, INPUTS[0], 180.0), (b, INPUTS[1], 0.0)):
        if bit:
            ang = angle if g.input_angle_deg is None else g.input_angle_deg
            out.append(StimulusConfig(time_s=g.input_time_s, marble=marble, where="rim", angle_deg=ang,
                                      radius_mm=cfg.pacemakers.radius_mm, amplitude=cfg.pacemakers.amplitude))
    return tuple(out)


def output_fires(cfg: ExperimentConfig, phi: float, a: int, b: int, *, threads: int = 1) -> int:
    g = cfg.gate
    run_cfg = replace(_with_phi(cfg, phi), stimuli=cfg.stimuli + _input_stimuli(cfg, a, b),
                      duration_s=g.input_time_s + g.read_window_s)
    log = run_scenario(run_cfg, threads=threads)
    return int(any(e.marble_id == OUTPUT for e in log.oscillations))


def truth_table(cfg: ExperimentConfig, phi: float, *, threads: int = 1) -> dict:
    return {(a, b): output_fires(cfg, phi, a, b, threads=threads) for a, b in COMBOS}


def gate_demo(cfg: ExperimentConfig, *, threads: int = 1) -> GateReport:
    """Truth tables of the junction at the configured low and high illumination."""
    g = cfg.gate
    return GateReport(g.phi_low, g.phi_high, truth_table(cfg, g.phi_low, threads=threads),
                      truth_table(cfg, g.phi_high, threads=threads))


def gate_sweep(cfg: ExperimentConfig, phis=None, *, threads: int = 1) -> tuple[dict, list[GateReport]]:
    """Truth table for every phi in the sweep and every ordered pair whose tables differ."""
    phis = list(cfg.gate.sweep if phis is None else phis)
    if not phis:
        phis = [cfg.gate.phi_low, cfg.gate.phi_high]
    tables = {float(p): truth_table(cfg, p, threads=threads) for p in phis}
    pairs = [
        GateReport(lo, hi, tables[lo], tables[hi])
        for lo, hi in itertools.combinations(sorted(tables), 2)
        if not math.isclose(lo, hi) and tables[lo] != tables[hi]
    ]
    return tables, pairs
