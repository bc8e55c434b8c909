"""From simulated fields to observables: waves, crossing times, transfers, pathways.

The inputs are what :class:`~bzmarbles.simulation.SimulationRecord` holds:
per-marble excited-area fractions sampled over time and per-cell activation
times (upward crossings of the per-cell ``v`` threshold).
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np
from scipy import ndimage

from .errors import ConfigurationError

log = logging.getLogger(__name__)

__all__ = [
    "DetectionParams",
    "OscillationEvent",
    "TransferEvent",
    "Pathway",
    "Crossing",
    "count_onsets",
    "detect_oscillations",
    "measure_crossing",
    "detect_transfers",
    "extract_pathways",
    "transfer_fraction",
    "experiment_statistics",
]


@dataclass(frozen=True)
class DetectionParams:
    """Thresholds of the wave detector.

    ``fraction_threshold`` is the excited-area fraction that counts as a wave;
    the detector re-arms once the fraction drops below
    ``fraction_threshold - hysteresis``.  Components smaller than
    ``min_component_fraction`` of the marble are not reported as separate
    waves.  Activations separated from the detected wave by a quiet spell
    longer than ``max_gap_s`` (aborted excitations) are not part of it.
    """

    fraction_threshold: float = 0.05
    hysteresis: float = 0.03
    window_s: float = 10.0
    min_component_fraction: float = 0.02
    max_gap_s: float = 5.0

    def __post_init__(self):
        if not 0 < self.fraction_threshold < 1:
            raise ConfigurationError("fraction_threshold must lie in (0, 1)")
        if not 0 < self.hysteresis <= self.fraction_threshold:
            raise ConfigurationError("hysteresis must lie in (0, fraction_threshold]")
        if self.window_s <= 0:
            raise ConfigurationError("window_s must be > 0")
        if self.max_gap_s <= 0:
            raise ConfigurationError("max_gap_s must be > 0")


@dataclass
class OscillationEvent:
    marble_id: int
    wave_id: int
    onset_time_s: float
    half1_crossing_s: float | None = None
    half2_crossing_s: float | None = None
    origin_cell: int | None = None
    detect_time_s: float | None = None
    cells: np.ndarray = field(default=None, repr=False)
    cell_times: np.ndarray = field(default=None, repr=False)

    def first_time_in(self, zone: np.ndarray) -> float | None:
        """Earliest activation of this wave among ``zone`` cells."""
        if self.cells is None or self.cells.size == 0:
            return None
        hit = np.isin(self.cells, zone)
        return float(self.cell_times[hit].min()) if hit.any() else None


@dataclass(frozen=True)
class TransferEvent:
    source_marble: int
    target_marble: int
    source_wave_id: int
    target_wave_id: int
    transfer_time_s: float
    edge_id: int
    zone_arrival_s: float = math.nan


@dataclass(frozen=True)
class Pathway:
    marbles: tuple[int, ...]
    transfer_ids: tuple[int, ...]
    start_s: float
    end_s: float

    @property
    def length(self) -> int:
        return len(self.marbles)


class Crossing(NamedTuple):
    t_half1_s: float
    t_half2_s: float
    t_full_s: float
    partial: bool = False
    degenerate: bool = False


def _check_time_axis(times: np.ndarray):
    if times.ndim != 1:
        raise ConfigurationError("time axis must be one-dimensional")
    if times.size > 1 and np.any(np.diff(times) <= 0):
        raise ConfigurationError("time axis must be strictly increasing")


def count_onsets(times, trace, threshold: float, hysteresis: float):
    """Two-state scan of a trace.

    Returns ``(onsets, rearms)``: onset times (linearly interpolated upward
    crossings of ``threshold`` while armed) and, for each onset, the time the
    detector re-armed afterwards (``inf`` if it never did).  The detector
    starts armed only if the trace starts below ``threshold``.
    """
    t = np.asarray(times, dtype=float)
    x = np.asarray(trace, dtype=float)
    _check_time_axis(t)
    if x.shape != t.shape:
        raise ConfigurationError("trace and time axis differ in length")
    if hysteresis <= 0:
        raise ConfigurationError("hysteresis must be > 0")
    low = threshold - hysteresis
    onsets, rearms = [], []
    armed = x.size > 0 and x[0] < threshold
    for i in range(1, x.size):
        if armed:
            if x[i] >= threshold:
                frac = (threshold - x[i - 1]) / (x[i] - x[i - 1])
                onsets.append(t[i - 1] + frac * (t[i] - t[i - 1]))
                rearms.append(math.inf)
                armed = False
        elif x[i] < low:
            armed = True
            if rearms:
                rearms[-1] = float(t[i])
    return onsets, rearms


def _contiguous_start(times: np.ndarray, until: float, max_gap: float) -> float:
    """Earliest time reachable backwards from ``until`` without a gap > ``max_gap``."""
    ts = np.sort(times)
    i = int(np.searchsorted(ts, until, side="right")) - 1
    if i < 0:
        return until
    gaps = np.nonzero(np.diff(ts[: i + 1]) > max_gap)[0]
    return float(ts[gaps[-1] + 1]) if gaps.size else float(ts[0])


def _components(grid, cells: np.ndarray) -> list[np.ndarray]:
    """Indices into ``cells`` grouped by 4-connected component on the grid."""
    img = np.zeros(grid.mask.shape, dtype=bool)
    rc = grid.cells[cells]
    img[rc[:, 0], rc[:, 1]] = True
    labels, n = ndimage.label(img)
    lab = labels[rc[:, 0], rc[:, 1]]
    return [np.nonzero(lab == k)[0] for k in range(1, n + 1)]


def _half_crossings(grid, origin: int, cells: np.ndarray, times: np.ndarray):
    """First arrival past the midline and at the far rim along origin->centre."""
    o = grid.xy_mm[origin]
    c = np.asarray(grid.centre_mm)
    axis = c - o
    dist = float(np.hypot(*axis))
    if dist < grid.h_mm:
        axis, dist = np.array([1.0, 0.0]), 0.0
    else:
        axis = axis / dist
    s_all = (grid.xy_mm - o) @ axis
    s_far = s_all.max() - grid.h_mm
    s = s_all[cells]
    past_mid = s >= dist
    at_rim = s >= s_far
    h1 = float(times[past_mid].min()) if past_mid.any() else None
    h2 = float(times[at_rim].min()) if at_rim.any() else None
    return h1, h2


def detect_oscillations(times_s, excited_fraction, activations=None, grids=None,
                        params: DetectionParams = DetectionParams(), marble_ids=None) -> list[OscillationEvent]:
    """Waves per marble from excited-fraction traces and activation times.

    ``excited_fraction`` is (frames, marbles) or a single trace.  Without
    activation data each threshold crossing is one event timed at the
    crossing.  With it, the activations between consecutive re-arm instants
    are split into 4-connected components; each large enough component is a
    wave whose onset is its earliest activation and whose origin is the cell
    activated first.
    """
    t = np.asarray(times_s, dtype=float)
    _check_time_axis(t)
    frac = np.asarray(excited_fraction, dtype=float)
    if frac.ndim == 1:
        frac = frac[:, None]
    n_marbles = frac.shape[1]
    ids = list(range(n_marbles)) if marble_ids is None else list(marble_ids)
    events: list[OscillationEvent] = []
    for m in range(n_marbles):
        onsets, rearms = count_onsets(t, frac[:, m], params.fraction_threshold, params.hysteresis)
        act = None if activations is None else activations[m]
        grid = None if grids is None else grids[m]
        found: list[OscillationEvent] = []
        prev = -math.inf
        for on, re in zip(onsets, rearms):
            comps = []
            if act is not None and grid is not None and act[0].size:
                cells, times = act
                sel = (times > prev) & (times <= re)
                c_w, t_w = cells[sel], times[sel]
                # first activation per cell in the window
                order = np.lexsort((t_w, c_w))
                c_w, t_w = c_w[order], t_w[order]
                keep = np.ones(c_w.size, dtype=bool)
                keep[1:] = c_w[1:] != c_w[:-1]
                c_w, t_w = c_w[keep], t_w[keep]
                if c_w.size:
                    start = _contiguous_start(t_w, on, params.max_gap_s)
                    live = t_w >= start
                    c_w, t_w = c_w[live], t_w[live]
                if c_w.size:
                    min_cells = max(1, int(math.ceil(params.min_component_fraction * grid.n_cells)))
                    for comp in _components(grid, c_w):
                        if comp.size >= min_cells:
                            comps.append((c_w[comp], t_w[comp]))
            if not comps:
                found.append(OscillationEvent(ids[m], -1, float(on), detect_time_s=float(on)))
            else:
                for cc, tt in comps:
                    first = int(np.argmin(tt))
                    origin = int(cc[first])
                    h1, h2 = _half_crossings(grid, origin, cc, tt)
                    found.append(OscillationEvent(
                        ids[m], -1, float(tt[first]), h1, h2, origin, float(on), cc, tt,
                    ))
            prev = re
        found.sort(key=lambda e: (e.onset_time_s, e.origin_cell if e.origin_cell is not None else -1))
        for w, e in enumerate(found):
            e.wave_id = w
        events.extend(found)
    return events


def measure_crossing(event: OscillationEvent) -> Crossing:
    """Times to cross the first half, the second half and the whole marble."""
    if event.half1_crossing_s is None or event.half2_crossing_s is None:
        return Crossing(math.nan, math.nan, math.nan, partial=True)
    t_full = event.half2_crossing_s - event.onset_time_s
    t_h1 = event.half1_crossing_s - event.onset_time_s
    t_h2 = t_full - t_h1
    degenerate = t_full == 0
    return Crossing(t_h1, t_h2, t_full, partial=False, degenerate=degenerate)


def mean_crossing(events: Sequence[OscillationEvent]) -> Crossing | None:
    """Average over complete, non-degenerate waves; ``None`` if there are none."""
    ok = [c for c in map(measure_crossing, events) if not c.partial and not c.degenerate]
    if not ok:
        return None
    arr = np.array([c[:3] for c in ok])
    m = arr.mean(axis=0)
    return Crossing(float(m[0]), float(m[1]), float(m[2]))


def detect_transfers(oscillations: Sequence[OscillationEvent], graph, window_s: float,
                     zone_assignments, near_misses: list | None = None) -> list[TransferEvent]:
    """Attribute target waves to source waves across contact edges.

    ``zone_assignments[e]`` is ``(cells of marble i, cells of marble j)`` of
    edge ``e``.  A wave in B counts as transferred from a wave in A over edge
    e when it starts within ``window_s`` after the A wave first activates A's
    side of the zone and B's origin lies in B's side of the zone.  A target
    wave takes the candidate with the smallest delay; the losing candidates
    are appended to ``near_misses`` when a list is given.
    """
    if window_s <= 0:
        raise ConfigurationError("window_s must be > 0")
    by_marble: dict[int, list[OscillationEvent]] = {}
    for ev in oscillations:
        by_marble.setdefault(ev.marble_id, []).append(ev)
    candidates: dict[tuple[int, int], list] = {}
    for e_id, edge in enumerate(graph.edges):
        za, zb = zone_assignments[e_id]
        for src_m, dst_m, z_src, z_dst in ((edge.i, edge.j, za, zb), (edge.j, edge.i, zb, za)):
            z_dst_set = set(int(c) for c in z_dst)
            targets = [ev for ev in by_marble.get(dst_m, ()) if ev.origin_cell is not None
                       and ev.origin_cell in z_dst_set]
            if not targets:
                continue
            for s_ev in by_marble.get(src_m, ()):
                t0 = s_ev.first_time_in(z_src)
                if t0 is None:
                    continue
                for d_ev in targets:
                    gap = d_ev.onset_time_s - t0
                    if 0 < gap <= window_s:
                        candidates.setdefault((dst_m, d_ev.wave_id), []).append(
                            (gap, src_m, s_ev.wave_id, e_id, t0, d_ev.onset_time_s))
    out = []
    for (dst_m, dst_w), cands in candidates.items():
        cands.sort()
        gap, src_m, src_w, e_id, t0, onset = cands[0]
        out.append(TransferEvent(src_m, dst_m, src_w, dst_w, onset, e_id, t0))
        if len(cands) > 1:
            log.debug("target wave %s/%s had %d candidate sources", dst_m, dst_w, len(cands))
            if near_misses is not None:
                near_misses.extend(TransferEvent(c[1], dst_m, c[2], dst_w, c[5], c[3], c[4]) for c in cands[1:])
    out.sort(key=lambda tr: (tr.transfer_time_s, tr.target_marble, tr.source_marble))
    return out


def _links(transfers: Sequence[TransferEvent]):
    """successor lists: T2 continues T1 when it leaves T1's target wave later on."""
    starts: dict[tuple[int, int], list[int]] = {}
    for n, tr in enumerate(transfers):
        starts.setdefault((tr.source_marble, tr.source_wave_id), []).append(n)
    succ = [[] for _ in transfers]
    has_pred = [False] * len(transfers)
    for n, tr in enumerate(transfers):
        for m in starts.get((tr.target_marble, tr.target_wave_id), ()):
            if transfers[m].transfer_time_s > tr.transfer_time_s:
                succ[n].append(m)
                has_pred[m] = True
    return succ, has_pred


def extract_pathways(transfers: Sequence[TransferEvent]) -> list[Pathway]:
    """Every maximal chain of linked transfers (root to leaf)."""
    transfers = list(transfers)
    if not transfers:
        return []
    succ, has_pred = _links(transfers)
    paths: list[tuple[int, ...]] = []
    for root in range(len(transfers)):
        if has_pred[root]:
            continue
        stack = [(root,)]
        while stack:
            chain = stack.pop()
            nxt = succ[chain[-1]]
            if not nxt:
                paths.append(chain)
            for m in reversed(nxt):
                stack.append(chain + (m,))
    out = []
    for chain in paths:
        first = transfers[chain[0]]
        marbles = (first.source_marble,) + tuple(transfers[n].target_marble for n in chain)
        out.append(Pathway(marbles, chain, first.transfer_time_s, transfers[chain[-1]].transfer_time_s))
    out.sort(key=lambda p: (p.start_s, p.transfer_ids))
    return out


def transfer_fraction(n_oscillations: int, n_transfers: int) -> float | None:
    """Share of oscillations that were transfers; ``None`` when nothing oscillated."""
    if n_oscillations == 0:
        return None
    return n_transfers / n_oscillations


def experiment_statistics(oscillations, transfers, pathways, n_marbles: int | None = None) -> dict:
    if n_marbles is None:
        n_marbles = 1 + max((e.marble_id for e in oscillations), default=-1)
    counts = [0] * n_marbles
    for e in oscillations:
        counts[e.marble_id] += 1
    n = len(oscillations)
    t = len(transfers)
    lengths = [p.length for p in pathways]
    return {
        "per_marble_counts": counts,
        "n_oscillations": n,
        "n_transfers": t,
        "transfer_fraction": transfer_fraction(n, t),
        "max_pathway_length": max(lengths, default=0),
        "n_pathways": len(pathways),
        "most_active_marble": int(np.argmax(counts)) if counts else None,
        "least_active_marble": int(np.argmin(counts)) if counts else None,
        "max_count": max(counts, default=0),
        "min_count": min(counts, default=0),
    }
