"""Scenario execution: config -> marbles -> contact graph -> simulation -> detection."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .. import __version__, _kernels
from ..analysis import (
    OscillationEvent,
    Pathway,
    TransferEvent,
    detect_oscillations,
    detect_transfers,
    experiment_statistics,
    extract_pathways,
    mean_crossing,
)
from ..array import ContactGraph, contact_graph, place
from ..errors import ConfigurationError
from ..kinetics import KineticsParams
from ..medium import MarbleGrid, MarbleSpec, SolverParams, build_disc_mask
from ..simulation import ArraySimulation, SimulationRecord, Stimulus
from .config import ExperimentConfig, derive_seed

log = logging.getLogger(__name__)

__all__ = ["RunLog", "build_marbles", "build_graph", "pacemaker_stimuli", "run_scenario",
           "build_id", "gate_layout", "solver_for"]


def build_id() -> str:
    return f"bzmarbles-{__version__}+{_kernels.BACKEND}"


@dataclass
class RunLog:
    """Everything a run produced, plus the config needed to reproduce it."""

    config: ExperimentConfig
    config_hash: str
    seed: int
    build: str
    graph: ContactGraph
    grids: list
    record: SimulationRecord
    stimuli: list
    oscillations: list[OscillationEvent]
    transfers: list[TransferEvent]
    pathways: list[Pathway]
    near_misses: list[TransferEvent] = field(default_factory=list)
    statistics: dict = field(default_factory=dict)

    @property
    def config_snapshot(self) -> dict:
        return self.config.to_dict()


def gate_layout(template: MarbleSpec, pitch_mm: float) -> list[MarbleSpec]:
    """Inputs 0 and 2 either side of junction 1, output 3 below the junction."""
    return [
        template.moved_to((-pitch_mm, 0.0)),
        template.moved_to((0.0, 0.0)),
        template.moved_to((pitch_mm, 0.0)),
        template.moved_to((0.0, -pitch_mm)),
    ]


def build_marbles(cfg: ExperimentConfig) -> list[MarbleSpec]:
    template = MarbleSpec.from_resolution(cfg.marble.volume_ul, cfg.marble.cells_per_diameter)
    if cfg.scenario == "single":
        return [template]
    if cfg.scenario == "gate":
        pitch = cfg.placement.pitch_mm if cfg.placement.pitch_mm is not None else template.diameter_mm
        return gate_layout(template, pitch)
    want = "ordered" if cfg.scenario == "ordered" else "disordered"
    if cfg.placement.mode != want:
        raise ConfigurationError(f"scenario {cfg.scenario!r} needs placement.mode {want!r}")
    pc = replace(cfg.placement, seed=derive_seed(cfg.seed, "placement"))
    return place(pc, template)


def build_graph(cfg: ExperimentConfig, marbles) -> ContactGraph:
    c = cfg.coupling
    return contact_graph(marbles, c.tolerance_mm, c.k_median, c.sigma, c.gate_prob,
                         derive_seed(cfg.seed, "permeability"))


def solver_for(cfg: ExperimentConfig, grids, kp: KineticsParams) -> SolverParams:
    h = min(g.h_mm for g in grids)
    s = cfg.solver
    if s.dt is None:
        return SolverParams.auto(h, kp, s.safety, s.dt_max)
    return SolverParams(s.dt, h, kp.diffusion_dimless, s.safety)


def _site_angle(grid: MarbleGrid, contacts, rng: np.random.Generator, clearance: float) -> float:
    """Random rim angle at least ``clearance`` mm from every contact point."""
    r = grid.spec.radius_mm
    cx, cy = grid.centre_mm

    def gap(a):
        if not contacts:
            return math.inf
        p = (cx + r * math.cos(a), cy + r * math.sin(a))
        return min(math.hypot(p[0] - q[0], p[1] - q[1]) for q in contacts)

    for _ in range(64):
        a = float(rng.uniform(0.0, 2.0 * math.pi))
        if gap(a) >= clearance:
            return a
    grid_a = np.linspace(0.0, 2.0 * math.pi, 360, endpoint=False)
    return float(grid_a[int(np.argmax([gap(a) for a in grid_a]))])


def pacemaker_stimuli(cfg: ExperimentConfig, grids, graph: ContactGraph) -> list[Stimulus]:
    """Per-marble periodic rim stimuli drawn from the run's pacemaker stream."""
    pm = cfg.pacemakers
    if not pm.enabled:
        return []
    rng = np.random.default_rng(derive_seed(cfg.seed, "pacemakers"))
    lo, hi = pm.period_range
    chosen = range(len(grids)) if pm.marbles is None else pm.marbles
    out = []
    for m in range(len(grids)):
        # draws happen for every marble so the streams do not depend on the selection
        period = float(rng.uniform(lo, hi)) if hi > lo else lo
        phase = float(rng.uniform(0.0, period)) if pm.phase_s is None else pm.phase_s
        contacts = [e.contact_point_mm for e in graph.edges if m in (e.i, e.j)]
        if pm.angle_deg is None:
            angle = _site_angle(grids[m], contacts, rng, pm.clearance_mm)
        else:
            angle = math.radians(pm.angle_deg)
        if m not in chosen:
            continue
        cell = grids[m].rim_cell(angle)
        t = phase
        while t < cfg.duration_s:
            out.append(Stimulus(t, m, cell, pm.radius_mm, pm.amplitude))
            t += period
    return out


def explicit_stimuli(cfg: ExperimentConfig, grids) -> list[Stimulus]:
    out = []
    for s in cfg.stimuli:
        if not 0 <= s.marble < len(grids):
            raise ConfigurationError(f"stimulus marble {s.marble} does not exist")
        g = grids[s.marble]
        if s.where == "centre":
            cell = g.centre_cell
        elif s.where == "rim":
            cell = g.rim_cell(math.radians(s.angle_deg))
        else:
            cell = int(s.where)
            if not 0 <= cell < g.n_cells:
                raise ConfigurationError(f"stimulus cell {cell} is outside marble {s.marble}")
        out.append(Stimulus(s.time_s, s.marble, cell, s.radius_mm, s.amplitude))
    return out


def run_scenario(cfg: ExperimentConfig, *, threads: int = 1, backend: str | None = None,
                 frames_every_s: float | None = None, extra_stimuli=()) -> RunLog:
    """Build, simulate and analyse one scenario; identical inputs give identical logs."""
    kp = cfg.kinetics_params()
    marbles = build_marbles(cfg)
    graph = build_graph(cfg, marbles)
    grids = [build_disc_mask(m) for m in marbles]
    solver = solver_for(cfg, grids, kp)
    stimuli = pacemaker_stimuli(cfg, grids, graph) + explicit_stimuli(cfg, grids) + list(extra_stimuli)
    sim = ArraySimulation(
        grids, graph, kp, solver,
        gate_seed=derive_seed(cfg.seed, "gates"),
        contact_zone_mm=cfg.coupling.contact_zone_mm,
        threads=threads, backend=backend,
    )
    frames = frames_every_s if frames_every_s is not None else cfg.output.frames_every_s
    log.info("running %s: %d marbles, %d edges, %d stimuli, dt=%g", cfg.scenario, len(grids),
             len(graph.edges), len(stimuli), solver.dt)
    record = sim.run(cfg.duration_s, stimuli, sample_every_s=cfg.output.sample_every_s, frames_every_s=frames)
    det = cfg.detection
    osc = detect_oscillations(record.times_s, record.excited_fraction, record.activations, grids, det)
    near: list = []
    transfers = detect_transfers(osc, graph, det.window_s, sim.zones, near_misses=near) if graph.edges else []
    pathways = extract_pathways(transfers)
    stats = experiment_statistics(osc, transfers, pathways, len(grids))
    crossing = mean_crossing(osc)
    stats["mean_t_full_s"] = None if crossing is None else crossing.t_full_s
    stats["mean_t_half1_s"] = None if crossing is None else crossing.t_half1_s
    stats["mean_t_half2_s"] = None if crossing is None else crossing.t_half2_s
    stats["n_edges"] = len(graph.edges)
    stats["n_near_misses"] = len(near)
    return RunLog(
        config=cfg,
        config_hash=cfg.config_hash(),
        seed=cfg.seed,
        build=build_id(),
        graph=graph,
        grids=grids,
        record=record,
        stimuli=stimuli,
        oscillations=osc,
        transfers=transfers,
        pathways=pathways,
        near_misses=near,
        statistics=stats,
    )
