"""Time integration of a whole marble array.

All marbles are flattened into one cell system so a single kernel call
advances every marble and evaluates the contact exchange each step.  The
Python side only intervenes at sample instants, stimulus times and when a
wave reaches a contact (to draw that contact's gate).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import _kernels
from .array import CONTACT_ZONE_MM, ContactGraph, edge_zones
from .kinetics import KineticsParams, pulse_peak_v, rest_state
from .medium import MarbleGrid, SolverParams, check_finite, stimulus_cells

__all__ = ["Stimulus", "DetectionLevels", "detection_levels", "SimulationRecord", "ArraySimulation"]


@dataclass(frozen=True)
class Stimulus:
    """Raise ``u`` to ``amplitude`` within ``radius_mm`` of a cell at ``time_s``."""

    time_s: float
    marble: int
    cell: int
    radius_mm: float = 0.2
    amplitude: float = 0.8


@dataclass(frozen=True)
class DetectionLevels:
    v_rest: float
    v_peak: float
    v_thr: float
    v_rearm: float


def detection_levels(kp: KineticsParams) -> DetectionLevels:
    """Per-cell threshold halfway between rest and pulse peak of ``v``.

    Cells re-arm once ``v`` falls back below a quarter of the way up.
    """
    _, v0 = rest_state(kp)
    vmax = _peak_cached(kp.epsilon, kp.f, kp.q, kp.phi)
    return DetectionLevels(v0, vmax, v0 + 0.5 * (vmax - v0), v0 + 0.25 * (vmax - v0))


_PEAKS: dict = {}


def _peak_cached(eps, f, q, phi):
    key = (eps, f, q, phi)
    if key not in _PEAKS:
        _PEAKS[key] = pulse_peak_v(KineticsParams(epsilon=eps, f=f, q=q, phi=phi))
    return _PEAKS[key]


@dataclass
class SimulationRecord:
    """What a run leaves behind for the detection pipeline.

    Times are in seconds.  ``activations[m]`` is a pair of arrays (local
    cell index, crossing time) of per-cell upward threshold crossings of v.
    """

    time_unit_s: float
    dt: float
    levels: DetectionLevels
    times_s: np.ndarray
    mean_u: np.ndarray
    mean_v: np.ndarray
    excited_fraction: np.ndarray
    activations: list
    gate_log: list
    frames: list = field(default_factory=list)
    stimuli_applied: list = field(default_factory=list)
    final_u: list = field(default_factory=list)
    final_v: list = field(default_factory=list)


class ArraySimulation:
    """Forward-Euler integration of every marble plus gated contact exchange.

    Args:
        grids: one :class:`MarbleGrid` per marble, aligned with ``graph.marbles``.
        graph: contact graph; only ``k`` and ``gate_prob`` of each edge are used.
        kp: kinetics and physical scaling.
        solver: time step; must satisfy the stability bound for every grid.
        gate_seed: seed of the generator used for per-wave gate draws.
    """

    def __init__(self, grids: Sequence[MarbleGrid], graph: ContactGraph, kp: KineticsParams,
                 solver: SolverParams, *, gate_seed: int = 0, contact_zone_mm: float = CONTACT_ZONE_MM,
                 threads: int = 1, backend: str | None = None, episode_on: float = 0.1,
                 episode_off: float = 0.02):
        self.grids = list(grids)
        self.graph = graph
        self.kp = kp
        h_min = min(g.h_mm for g in self.grids)
        SolverParams(solver.dt, h_min, kp.diffusion_dimless, solver.safety)
        self.dt = solver.dt
        self.threads = max(1, int(threads))
        self.backend = backend
        self.levels = detection_levels(kp)

        sizes = [g.n_cells for g in self.grids]
        self.offsets = np.concatenate([[0], np.cumsum(sizes)]).astype(np.int64)
        nbr = np.concatenate([g.nbr.astype(np.int64) + off for g, off in zip(self.grids, self.offsets)])
        inv_h2 = np.concatenate([np.full(g.n_cells, 1.0 / g.h_mm ** 2) for g in self.grids])
        self.zones = edge_zones(graph, self.grids, contact_zone_mm) if graph.edges else []
        coupling = self._coupling(episode_on, episode_off)
        self.system = _kernels.CellSystem(nbr, inv_h2, coupling)
        u0, v0 = rest_state(kp)
        n = self.system.n_cells
        self.u = np.full(n, u0)
        self.v = np.full(n, v0)
        self.ext = np.zeros(n)
        self.system.enable_detection(self.levels.v_thr, self.levels.v_rearm, self.v)
        self.gate_prob = np.array([e.gate_prob for e in graph.edges], dtype=float)
        self.gate_rng = np.random.default_rng(gate_seed)
        self.step_index = 0

    def _coupling(self, ep_on, ep_off) -> _kernels.Coupling:
        if not self.zones:
            return _kernels.Coupling.empty()
        za = [za + self.offsets[e.i] for e, (za, _) in zip(self.graph.edges, self.zones)]
        zb = [zb + self.offsets[e.j] for e, (_, zb) in zip(self.graph.edges, self.zones)]
        ptr = lambda parts: np.concatenate([[0], np.cumsum([p.size for p in parts])])
        k = np.array([e.k for e in self.graph.edges], dtype=float)
        return _kernels.Coupling(ptr(za), np.concatenate(za), ptr(zb), np.concatenate(zb), k,
                                 ep_on=ep_on, ep_off=ep_off)

    @property
    def n_marbles(self) -> int:
        return len(self.grids)

    def seconds_to_steps(self, seconds: float) -> int:
        return int(round(seconds / (self.kp.time_unit_s * self.dt)))

    def marble_slice(self, m: int) -> slice:
        return slice(int(self.offsets[m]), int(self.offsets[m + 1]))

    def apply_stimulus(self, s: Stimulus):
        g = self.grids[s.marble]
        idx = stimulus_cells(g, s.cell, s.radius_mm) + self.offsets[s.marble]
        self.u[idx] = np.maximum(self.u[idx], s.amplitude)

    def _summaries(self):
        sums_u = np.add.reduceat(self.u, self.offsets[:-1])
        sums_v = np.add.reduceat(self.v, self.offsets[:-1])
        exc = np.add.reduceat((self.v > self.levels.v_thr).astype(float), self.offsets[:-1])
        n = np.diff(self.offsets)
        return sums_u / n, sums_v / n, exc / n

    def _advance_to(self, target: int, gate_log: list):
        c = self.system.coupling
        tu = self.kp.time_unit_s
        while self.step_index < target:
            done, pending = _kernels.advance(
                self.system, self.u, self.v, self.ext, self.kp, self.kp.diffusion_dimless, self.dt,
                target - self.step_index, t0=0.0, step0=self.step_index, threads=self.threads,
                backend=self.backend,
            )
            self.step_index += done
            if pending:
                ids = np.nonzero(c.pending)[0]
                opened = self.gate_rng.random(ids.size) < self.gate_prob[ids]
                c.gate_open[ids] = opened
                c.active[ids] = 1
                c.pending[ids] = 0
                t_s = self.step_index * self.dt * tu
                gate_log.extend((t_s, int(e), bool(o)) for e, o in zip(ids, opened))

    def run(self, duration_s: float, stimuli: Sequence[Stimulus] = (), sample_every_s: float = 0.5,
            frames_every_s: float | None = None) -> SimulationRecord:
        tu = self.kp.time_unit_s
        n_total = self.seconds_to_steps(duration_s)
        sample_steps = max(1, self.seconds_to_steps(sample_every_s))
        frame_steps = None if not frames_every_s else max(1, self.seconds_to_steps(frames_every_s))
        pending_stims = sorted(stimuli, key=lambda s: (s.time_s, s.marble, s.cell))
        stim_steps = [self.seconds_to_steps(s.time_s) for s in pending_stims]
        n_marbles = self.n_marbles

        times, mu, mv, fr, frames, applied, gate_log = [], [], [], [], [], [], []
        act_cells = [[] for _ in range(n_marbles)]
        act_times = [[] for _ in range(n_marbles)]
        si = 0

        def record():
            a, b, c = self._summaries()
            times.append(self.step_index * self.dt * tu)
            mu.append(a)
            mv.append(b)
            fr.append(c)

        def frame():
            frames.append((self.step_index * self.dt * tu, self.v.astype(np.float32)))

        def harvest():
            cells, t = self.system.harvest_crossings()
            if cells.size == 0:
                return
            owner = np.searchsorted(self.offsets, cells, side="right") - 1
            for m in np.unique(owner):
                sel = owner == m
                act_cells[m].append(cells[sel] - self.offsets[m])
                act_times[m].append(t[sel] * tu)

        while si < len(stim_steps) and stim_steps[si] <= self.step_index:
            self.apply_stimulus(pending_stims[si])
            applied.append(pending_stims[si])
            si += 1
        record()
        if frame_steps:
            frame()
        while self.step_index < n_total:
            nxt = min(n_total, (self.step_index // sample_steps + 1) * sample_steps)
            if frame_steps:
                nxt = min(nxt, (self.step_index // frame_steps + 1) * frame_steps)
            if si < len(stim_steps):
                nxt = min(nxt, max(stim_steps[si], self.step_index + 1))
            self._advance_to(nxt, gate_log)
            harvest()
            check_finite(self.u, self.v, self.step_index * self.dt, self.offsets)
            while si < len(stim_steps) and stim_steps[si] <= self.step_index:
                self.apply_stimulus(pending_stims[si])
                applied.append(pending_stims[si])
                si += 1
            if self.step_index % sample_steps == 0 or self.step_index == n_total:
                record()
            if frame_steps and self.step_index % frame_steps == 0:
                frame()

        activations = []
        for m in range(n_marbles):
            if act_cells[m]:
                c = np.concatenate(act_cells[m]).astype(np.int64)
                t = np.concatenate(act_times[m])
                order = np.lexsort((c, t))
                activations.append((c[order], t[order]))
            else:
                activations.append((np.zeros(0, dtype=np.int64), np.zeros(0)))
        shape = (len(times), n_marbles)
        return SimulationRecord(
            time_unit_s=tu,
            dt=self.dt,
            levels=self.levels,
            times_s=np.array(times),
            mean_u=np.array(mu).reshape(shape),
            mean_v=np.array(mv).reshape(shape),
            excited_fraction=np.array(fr).reshape(shape),
            activations=activations,
            gate_log=gate_log,
            frames=frames,
            stimuli_applied=applied,
            final_u=[self.u[self.marble_slice(m)].copy() for m in range(n_marbles)],
            final_v=[self.v[self.marble_slice(m)].copy() for m in range(n_marbles)],
        )
