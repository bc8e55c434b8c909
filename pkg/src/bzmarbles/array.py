"""Marble placement, contact graphs and gated activator exchange at contacts.

Transfer between touching marbles is modelled as diffusive exchange of
activator through a small contact zone on each side.  Each contact carries a
static permeability ``k`` and a per-wave gate that is re-drawn open with
probability ``gate_prob`` whenever a new wave reaches the contact.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .errors import ConfigurationError, GeometryError, PackingError
from .medium import MarbleGrid, MarbleSpec, MediumState

__all__ = [
    "CONTACT_ZONE_MM",
    "Edge",
    "ContactGraph",
    "PlacementConfig",
    "place_ordered",
    "place_disordered",
    "place",
    "contact_graph",
    "contact_zone",
    "coupling_fluxes",
    "update_gates",
]

CONTACT_ZONE_MM = 0.3


@dataclass(frozen=True)
class Edge:
    i: int
    j: int
    contact_point_mm: tuple[float, float]
    k: float
    gate_prob: float
    gate_open: bool = False


@dataclass(frozen=True)
class ContactGraph:
    marbles: tuple[MarbleSpec, ...]
    edges: tuple[Edge, ...]

    def __post_init__(self):
        object.__setattr__(self, "marbles", tuple(self.marbles))
        object.__setattr__(self, "edges", tuple(self.edges))
        seen = set()
        for e in self.edges:
            if e.i == e.j:
                raise ConfigurationError(f"self-edge on marble {e.i}")
            key = (min(e.i, e.j), max(e.i, e.j))
            if key in seen:
                raise ConfigurationError(f"duplicate edge {key}")
            seen.add(key)
            if e.k < 0 or not 0 <= e.gate_prob <= 1:
                raise ConfigurationError(f"edge {key}: need k >= 0 and 0 <= gate_prob <= 1")

    def neighbours(self, m: int) -> list[int]:
        return sorted({e.j if e.i == m else e.i for e in self.edges if m in (e.i, e.j)})

    def edge_index(self, a: int, b: int) -> int | None:
        for n, e in enumerate(self.edges):
            if {e.i, e.j} == {a, b}:
                return n
        return None

    def with_gate_prob(self, gate_prob: float) -> "ContactGraph":
        return replace(self, edges=tuple(replace(e, gate_prob=gate_prob) for e in self.edges))


@dataclass(frozen=True)
class PlacementConfig:
    """Either an ordered ``rows x cols`` lattice or a random dish packing.

    ``clustered`` switches the disordered mode from uniform candidates to
    candidates that stick to a randomly chosen, already placed marble.
    """

    mode: str = "disordered"
    rows: int = 4
    cols: int = 4
    pitch_mm: float | None = None
    count: int = 14
    dish_radius_mm: float = 17.5
    min_gap_mm: float = -0.1
    max_attempts: int = 100_000
    clustered: bool = False
    overlap_tolerance_mm: float = 0.2
    seed: int = 0

    def __post_init__(self):
        if self.mode not in ("ordered", "disordered"):
            raise ConfigurationError(f"placement mode must be 'ordered' or 'disordered', got {self.mode!r}")
        if self.mode == "ordered" and (self.rows < 1 or self.cols < 1):
            raise ConfigurationError("ordered placement needs rows, cols >= 1")
        if self.mode == "disordered":
            if self.count < 1:
                raise ConfigurationError("disordered placement needs count >= 1")
            if self.dish_radius_mm <= 0 or self.max_attempts < 1:
                raise ConfigurationError("dish_radius_mm and max_attempts must be positive")


def place_ordered(rows: int, cols: int, pitch_mm: float, template: MarbleSpec,
                  overlap_tolerance_mm: float = 0.2) -> list[MarbleSpec]:
    """Marbles at lattice points ``(r * pitch, c * pitch)``, ids row-major."""
    if rows < 1 or cols < 1:
        raise ConfigurationError("rows and cols must be >= 1")
    if pitch_mm < template.diameter_mm - overlap_tolerance_mm:
        raise ConfigurationError(
            f"pitch {pitch_mm} mm is smaller than the diameter {template.diameter_mm:.3f} mm "
            f"minus the overlap tolerance {overlap_tolerance_mm} mm"
        )
    return [template.moved_to((r * pitch_mm, c * pitch_mm)) for r in range(rows) for c in range(cols)]


def place_disordered(cfg: PlacementConfig, template: MarbleSpec) -> list[MarbleSpec]:
    """Random sequential placement inside a circular dish centred at the origin.

    Candidates overlapping an earlier marble by more than ``-min_gap_mm`` are
    rejected.  Raises :class:`PackingError` when ``max_attempts`` candidates
    have been tried without placing ``count`` marbles.
    """
    rng = np.random.default_rng(cfg.seed)
    r = template.radius_mm
    reach = cfg.dish_radius_mm - r
    if reach < 0:
        raise ConfigurationError(f"dish radius {cfg.dish_radius_mm} mm cannot hold a marble of radius {r:.3f} mm")
    min_dist = 2.0 * r + cfg.min_gap_mm
    pts = np.empty((cfg.count, 2))
    placed = 0
    for _ in range(cfg.max_attempts):
        if placed == cfg.count:
            break
        if cfg.clustered and placed > 0:
            anchor = pts[int(rng.integers(placed))]
            ang = rng.uniform(0.0, 2.0 * math.pi)
            cand = anchor + min_dist * np.array([math.cos(ang), math.sin(ang)])
            if math.hypot(cand[0], cand[1]) > reach:
                continue
        else:
            rad = reach * math.sqrt(rng.random())
            ang = rng.uniform(0.0, 2.0 * math.pi)
            cand = np.array([rad * math.cos(ang), rad * math.sin(ang)])
        if placed:
            d = np.hypot(pts[:placed, 0] - cand[0], pts[:placed, 1] - cand[1])
            if np.any(d < min_dist - 1e-9):
                continue
        pts[placed] = cand
        placed += 1
    if placed < cfg.count:
        raise PackingError(
            f"placed only {placed} of {cfg.count} marbles in {cfg.max_attempts} attempts", achieved=placed
        )
    return [template.moved_to((float(x), float(y))) for x, y in pts]


def place(cfg: PlacementConfig, template: MarbleSpec) -> list[MarbleSpec]:
    if cfg.mode == "ordered":
        pitch = template.diameter_mm if cfg.pitch_mm is None else cfg.pitch_mm
        return place_ordered(cfg.rows, cfg.cols, pitch, template, cfg.overlap_tolerance_mm)
    return place_disordered(cfg, template)


def contact_graph(marbles: Sequence[MarbleSpec], contact_tolerance_mm: float, k_median: float,
                  k_sigma: float, gate_prob: float, seed: int) -> ContactGraph:
    """One edge per pair with centre distance <= mean diameter + tolerance.

    Edge permeabilities are log-normal: ``k_median * exp(k_sigma * z)``.
    """
    if contact_tolerance_mm < 0:
        raise ConfigurationError("contact tolerance must be >= 0")
    if k_median < 0 or k_sigma < 0:
        raise ConfigurationError("k_median and k_sigma must be >= 0")
    rng = np.random.default_rng(seed)
    edges = []
    for a in range(len(marbles)):
        for b in range(a + 1, len(marbles)):
            pa, pb = marbles[a].position_mm, marbles[b].position_mm
            dist = math.hypot(pb[0] - pa[0], pb[1] - pa[1])
            if dist <= 0.5 * (marbles[a].diameter_mm + marbles[b].diameter_mm) + contact_tolerance_mm:
                mid = (0.5 * (pa[0] + pb[0]), 0.5 * (pa[1] + pb[1]))
                k = k_median * math.exp(k_sigma * rng.standard_normal())
                edges.append(Edge(a, b, mid, k, gate_prob))
    return ContactGraph(tuple(marbles), tuple(edges))


def contact_zone(grid: MarbleGrid, point_mm, zone_mm: float = CONTACT_ZONE_MM) -> np.ndarray:
    """Local indices of the cells within ``zone_mm`` of a contact point."""
    return grid.cells_within(point_mm, zone_mm)


def edge_zones(graph: ContactGraph, grids: Sequence[MarbleGrid],
               zone_mm: float = CONTACT_ZONE_MM) -> list[tuple[np.ndarray, np.ndarray]]:
    """Per edge, the (side i, side j) contact-zone cells; raises on an empty zone."""
    zones = []
    for n, e in enumerate(graph.edges):
        za = contact_zone(grids[e.i], e.contact_point_mm, zone_mm)
        zb = contact_zone(grids[e.j], e.contact_point_mm, zone_mm)
        if za.size == 0 or zb.size == 0:
            raise GeometryError(
                f"edge {n} ({e.i}-{e.j}): empty contact zone within {zone_mm} mm of "
                f"{e.contact_point_mm}; marbles are too far apart for this edge"
            )
        zones.append((za, zb))
    return zones


def coupling_fluxes(graph: ContactGraph, states: Sequence[MediumState], grids: Sequence[MarbleGrid],
                    zone_mm: float = CONTACT_ZONE_MM, zones=None) -> list[np.ndarray]:
    """Per-marble per-cell activator sources from all open edges.

    For edge (A, B) the exchange is ``k * (mean_A - mean_B)`` over the two
    contact zones. The receiving zone gains it uniformly; the donating zone
    gives it in proportion to each cell's ``u``, so no cell is drained below
    zero. The zone totals are equal and opposite.
    """
    if len(states) != len(graph.marbles):
        raise ConfigurationError("states must align with graph.marbles")
    if zones is None:
        zones = edge_zones(graph, grids, zone_mm)
    out = [np.zeros_like(s.u, dtype=float) for s in states]
    for e, (za, zb) in zip(graph.edges, zones):
        if not e.gate_open or e.k == 0:
            continue
        ua, ub = states[e.i].u[za], states[e.j].u[zb]
        ma, mb = ua.mean(), ub.mean()
        flux = e.k * (ma - mb)
        if flux > 0:
            out[e.j][zb] += flux / zb.size
            out[e.i][za] -= flux / (ma * za.size) * ua
        elif flux < 0:
            out[e.j][zb] += flux / (mb * zb.size) * ub
            out[e.i][za] -= flux / za.size
    return out


def update_gates(graph: ContactGraph, new_arrivals, rng: np.random.Generator) -> ContactGraph:
    """Re-draw the gate of every edge that has a new wave arriving.

    ``new_arrivals`` is an iterable of edge indices (or a boolean mask over
    edges).  Gates of other edges are left as they are.
    """
    arr = np.asarray(list(new_arrivals) if not isinstance(new_arrivals, np.ndarray) else new_arrivals)
    if arr.dtype == bool:
        ids = np.nonzero(arr)[0].tolist()
    else:
        ids = sorted(int(x) for x in arr)
    if not ids:
        return graph
    probs = np.array([graph.edges[i].gate_prob for i in ids])
    opened = rng.random(len(ids)) < probs
    edges = list(graph.edges)
    for i, o in zip(ids, opened):
        edges[i] = replace(edges[i], gate_open=bool(o))
    return replace(graph, edges=tuple(edges))
