"""A single liquid marble as a disc of excitable medium on a square grid.

Fields live on the masked cells only, stored as flat arrays in row-major
order of the mask.  The boundary is no-flux: a missing neighbour contributes
the centre value to the 5-point stencil.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from . import _kernels
from .errors import ConfigurationError, SolverBlowUpError
from .kinetics import KineticsParams, rest_state

__all__ = [
    "MIN_CELLS_PER_DIAMETER",
    "MarbleSpec",
    "MarbleGrid",
    "MediumState",
    "SolverParams",
    "diameter_from_volume",
    "build_disc_mask",
    "strip_grid",
    "neighbour_table",
    "laplacian",
    "resting_state",
    "step",
    "initiate_wave",
]

MIN_CELLS_PER_DIAMETER = 20
# u below this means the explicit scheme has gone unstable.
NEGATIVE_U_LIMIT = -1e-6


def diameter_from_volume(volume_ul: float) -> float:
    """Sphere-equivalent diameter in mm (1 ul == 1 mm^3)."""
    return (6.0 * volume_ul / math.pi) ** (1.0 / 3.0)


@dataclass(frozen=True)
class MarbleSpec:
    volume_ul: float
    grid_h_mm: float
    position_mm: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        if not (self.volume_ul > 0 and math.isfinite(self.volume_ul)):
            raise ConfigurationError(f"volume_ul must be > 0, got {self.volume_ul}")
        if not (self.grid_h_mm > 0 and math.isfinite(self.grid_h_mm)):
            raise ConfigurationError(f"grid_h_mm must be > 0, got {self.grid_h_mm}")
        object.__setattr__(self, "position_mm", (float(self.position_mm[0]), float(self.position_mm[1])))

    @classmethod
    def from_resolution(cls, volume_ul: float, cells_per_diameter: float, position_mm=(0.0, 0.0)):
        h = diameter_from_volume(volume_ul) / cells_per_diameter
        return cls(volume_ul, h, position_mm)

    @property
    def diameter_mm(self) -> float:
        return diameter_from_volume(self.volume_ul)

    @property
    def radius_mm(self) -> float:
        return 0.5 * self.diameter_mm

    @property
    def resolution(self) -> float:
        return self.diameter_mm / self.grid_h_mm

    def moved_to(self, position_mm) -> "MarbleSpec":
        return MarbleSpec(self.volume_ul, self.grid_h_mm, tuple(position_mm))


def neighbour_table(mask: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Flat 4-neighbour table for the True cells of ``mask``.

    Returns ``(cells, nbr)``: ``cells`` is (n, 2) row/col indices in row-major
    order; ``nbr`` is (n, 4) int32 local indices ordered (row-1, row+1,
    col-1, col+1), with a cell's own index where the neighbour is outside the
    mask.
    """
    mask = np.asarray(mask, dtype=bool)
    rows, cols = np.nonzero(mask)
    n = rows.size
    index = np.full(mask.shape, -1, dtype=np.int64)
    index[rows, cols] = np.arange(n)
    padded = np.pad(index, 1, constant_values=-1)
    nbr = np.empty((n, 4), dtype=np.int32)
    own = np.arange(n)
    for j, (dr, dc) in enumerate(((-1, 0), (1, 0), (0, -1), (0, 1))):
        look = padded[rows + 1 + dr, cols + 1 + dc]
        nbr[:, j] = np.where(look >= 0, look, own)
    return np.stack([rows, cols], axis=1), nbr


@dataclass(eq=False)
class MarbleGrid:
    """Discretised geometry of one marble (or of a test strip).

    ``xy_mm`` holds cell-centre coordinates in the dish frame.
    """

    spec: MarbleSpec | None
    h_mm: float
    mask: np.ndarray
    cells: np.ndarray
    nbr: np.ndarray
    xy_mm: np.ndarray
    centre_mm: tuple[float, float]

    @property
    def n_cells(self) -> int:
        return int(self.cells.shape[0])

    @cached_property
    def centre_cell(self) -> int:
        d = np.hypot(self.xy_mm[:, 0] - self.centre_mm[0], self.xy_mm[:, 1] - self.centre_mm[1])
        return int(np.argmin(d))

    def to_image(self, values, fill=np.nan) -> np.ndarray:
        img = np.full(self.mask.shape, fill, dtype=float)
        img[self.cells[:, 0], self.cells[:, 1]] = values
        return img

    def cells_within(self, point_mm, radius_mm: float) -> np.ndarray:
        d = np.hypot(self.xy_mm[:, 0] - point_mm[0], self.xy_mm[:, 1] - point_mm[1])
        return np.nonzero(d <= radius_mm + 1e-12)[0]

    def cell_at(self, point_mm) -> int:
        """Masked cell whose centre is nearest to ``point_mm``."""
        d = np.hypot(self.xy_mm[:, 0] - point_mm[0], self.xy_mm[:, 1] - point_mm[1])
        return int(np.argmin(d))

    def rim_cell(self, angle_rad: float) -> int:
        """Masked cell nearest the rim point at ``angle_rad`` (0 = +x)."""
        r = self.spec.radius_mm if self.spec is not None else 0.0
        cx, cy = self.centre_mm
        return self.cell_at((cx + r * math.cos(angle_rad), cy + r * math.sin(angle_rad)))


def build_disc_mask(spec: MarbleSpec) -> MarbleGrid:
    """Disc mask: every grid cell whose centre is within ``d/2`` of the centre.

    The grid is odd-sized and centred on the marble so the centre is a cell
    centre and the mask is mirror-symmetric.
    """
    if spec.resolution < MIN_CELLS_PER_DIAMETER:
        raise ConfigurationError(
            f"grid too coarse: diameter/h = {spec.resolution:.2f} < {MIN_CELLS_PER_DIAMETER}"
        )
    h = spec.grid_h_mm
    r = spec.radius_mm
    half = int(math.ceil(r / h))
    offs = np.arange(-half, half + 1) * h
    # rows run along -y so images come out the right way up
    yy, xx = np.meshgrid(-offs, offs, indexing="ij")
    mask = xx * xx + yy * yy <= r * r
    cells, nbr = neighbour_table(mask)
    cx, cy = spec.position_mm
    xy = np.stack([xx[mask] + cx, yy[mask] + cy], axis=1)
    return MarbleGrid(spec, h, mask, cells, nbr, xy, (cx, cy))


def strip_grid(length_cells: int, width_cells: int, h_mm: float) -> MarbleGrid:
    """Rectangular test domain, x along the length."""
    if length_cells < 2 or width_cells < 1:
        raise ConfigurationError("strip needs length >= 2 and width >= 1 cells")
    mask = np.ones((width_cells, length_cells), dtype=bool)
    cells, nbr = neighbour_table(mask)
    xy = np.stack([cells[:, 1] * h_mm, -cells[:, 0] * h_mm], axis=1).astype(float)
    centre = (0.5 * (length_cells - 1) * h_mm, -0.5 * (width_cells - 1) * h_mm)
    return MarbleGrid(None, h_mm, mask, cells, nbr, xy, centre)


def laplacian(field_img: np.ndarray, mask: np.ndarray, h: float) -> np.ndarray:
    """5-point Laplacian of a 2D image restricted to ``mask`` (no-flux edges).

    Cells outside the mask are returned as 0.
    """
    mask = np.asarray(mask, dtype=bool)
    f = np.where(mask, np.asarray(field_img, dtype=float), 0.0)
    fp = np.pad(f, 1)
    mp = np.pad(mask, 1)
    centre = fp[1:-1, 1:-1]
    acc = np.zeros_like(centre)
    for sl in ((slice(0, -2), slice(1, -1)), (slice(2, None), slice(1, -1)),
               (slice(1, -1), slice(0, -2)), (slice(1, -1), slice(2, None))):
        acc += np.where(mp[sl], fp[sl], centre)
    out = (acc - 4.0 * centre) / (h * h)
    return np.where(mask, out, 0.0)


@dataclass
class MediumState:
    u: np.ndarray
    v: np.ndarray
    t: float = 0.0

    def copy(self) -> "MediumState":
        return MediumState(self.u.copy(), self.v.copy(), self.t)


@dataclass(frozen=True)
class SolverParams:
    """Explicit time step, checked against the diffusion stability bound.

    ``dt <= safety * h^2 / (4 D)`` with ``D`` the dimensionless-time diffusion
    coefficient in mm^2 and ``h`` the finest grid spacing in use.
    """

    dt: float
    h_mm: float
    diffusion: float
    safety: float = 0.9

    def __post_init__(self):
        if not 0 < self.safety <= 1:
            raise ConfigurationError(f"safety factor must lie in (0, 1], got {self.safety}")
        if not (self.dt > 0 and self.h_mm > 0 and self.diffusion >= 0):
            raise ConfigurationError(f"invalid solver parameters: {self}")
        if self.diffusion > 0 and self.dt > self.dt_limit * (1 + 1e-12):
            raise ConfigurationError(
                f"dt={self.dt:g} violates the explicit stability bound "
                f"{self.safety:g}*h^2/(4D) = {self.dt_limit:g}"
            )

    @property
    def dt_limit(self) -> float:
        if self.diffusion == 0:
            return math.inf
        return self.safety * self.h_mm ** 2 / (4.0 * self.diffusion)

    @classmethod
    def auto(cls, h_mm: float, kp: KineticsParams, safety: float = 0.5, dt_max: float = 8e-4):
        """Largest step allowed by the stability bound, capped at ``dt_max``."""
        d = kp.diffusion_dimless
        dt = min(dt_max, safety * h_mm ** 2 / (4.0 * d))
        return cls(dt, h_mm, d, safety)


def resting_state(grid: MarbleGrid, kp: KineticsParams) -> MediumState:
    u0, v0 = rest_state(kp)
    n = grid.n_cells
    return MediumState(np.full(n, u0), np.full(n, v0), 0.0)


def step(state: MediumState, grid: MarbleGrid, kp: KineticsParams, sp: SolverParams,
         external_flux=None, *, reactions: bool = True, nsteps: int = 1) -> MediumState:
    """Advance one marble by ``nsteps`` forward-Euler steps.

    ``external_flux`` is a per-cell source added to du/dt only.
    ``reactions=False`` switches the kinetics off (pure diffusion).
    """
    n = grid.n_cells
    if sp.diffusion != kp.diffusion_dimless:
        # stability was checked for sp.diffusion; re-check against the medium's value
        SolverParams(sp.dt, grid.h_mm, kp.diffusion_dimless, sp.safety)
    ext = np.zeros(n) if external_flux is None else np.ascontiguousarray(external_flux, dtype=float)
    if ext.shape != (n,):
        raise ConfigurationError(f"external_flux must have shape ({n},), got {ext.shape}")
    u = state.u.astype(float, copy=True)
    v = state.v.astype(float, copy=True)
    inv_h2 = np.full(n, 1.0 / (grid.h_mm * grid.h_mm))
    system = _kernels.CellSystem(grid.nbr, inv_h2)
    _kernels.advance(system, u, v, ext, kp, kp.diffusion_dimless, sp.dt, nsteps,
                     reactions=reactions, t0=state.t)
    check_finite(u, v, state.t + nsteps * sp.dt)
    return MediumState(u, v, state.t + nsteps * sp.dt)


def check_finite(u: np.ndarray, v: np.ndarray, t: float, offsets=None):
    """Raise :class:`SolverBlowUpError` naming the first bad cell."""
    bad = ~(np.isfinite(u) & np.isfinite(v)) | (u < NEGATIVE_U_LIMIT)
    if bad.any():
        cell = int(np.argmax(bad))
        marble = None
        if offsets is not None:
            marble = int(np.searchsorted(offsets, cell, side="right") - 1)
        raise SolverBlowUpError(
            f"solver blow-up at t={t:g}: cell {cell} has u={u[cell]!r}, v={v[cell]!r}",
            cell=cell, marble=marble, time=t,
        )


def initiate_wave(state: MediumState, grid: MarbleGrid, centre_cell: int,
                  radius_mm: float, amplitude: float) -> MediumState:
    """Silver-wire style stimulus: ``u = max(u, amplitude)`` within ``radius_mm``.

    ``radius_mm = 0`` touches only ``centre_cell``.  ``v`` is left alone.
    """
    if not 0 <= centre_cell < grid.n_cells:
        raise ConfigurationError(f"centre cell {centre_cell} is outside the mask ({grid.n_cells} cells)")
    if not amplitude > 0:
        raise ConfigurationError(f"amplitude must be > 0, got {amplitude}")
    if radius_mm < 0:
        raise ConfigurationError(f"radius_mm must be >= 0, got {radius_mm}")
    out = state.copy()
    idx = stimulus_cells(grid, centre_cell, radius_mm)
    out.u[idx] = np.maximum(out.u[idx], amplitude)
    return out


def stimulus_cells(grid: MarbleGrid, centre_cell: int, radius_mm: float) -> np.ndarray:
    idx = grid.cells_within(grid.xy_mm[centre_cell], radius_mm)
    if centre_cell not in idx:
        idx = np.append(idx, centre_cell)
    return idx
