"""Planar wave speed on a no-flux strip, shared by the medium and acceptance tests."""
import numpy as np

from bzmarbles.array import ContactGraph
from bzmarbles.kinetics import KineticsParams
from bzmarbles.medium import SolverParams, strip_grid
from bzmarbles.simulation import ArraySimulation


def front_times(h_mm, length_mm=12.0, width_cells=40, kp=None, dt=None, kick_mm=0.6):
    """(x_mm, crossing time in s) of the v threshold per strip column."""
    kp = kp or KineticsParams()
    n = int(round(length_mm / h_mm))
    grid = strip_grid(n, width_cells, h_mm)
    sp = SolverParams.auto(h_mm, kp) if dt is None else SolverParams(dt, h_mm, kp.diffusion_dimless, 0.5)
    sim = ArraySimulation([grid], ContactGraph((None,), ()), kp, sp)
    sim.u[grid.xy_mm[:, 0] < kick_mm] = 0.8
    # front speed is roughly 0.25 mm/s at the default scaling
    rec = sim.run(length_mm / 0.1, sample_every_s=5.0)
    cells, t = rec.activations[0]
    first = np.full(grid.n_cells, np.nan)
    # first crossing per cell (activations are time-sorted)
    seen = np.zeros(grid.n_cells, dtype=bool)
    for c, tt in zip(cells, t):
        if not seen[c]:
            first[c] = tt
            seen[c] = True
    col = grid.cells[:, 1]
    times = np.array([first[col == j].mean() for j in range(n)])
    return np.arange(n) * h_mm, times


def segment_speeds(x, t, start_mm, stop_mm, n_segments=4):
    edges = np.linspace(start_mm, stop_mm, n_segments + 1)
    tt = np.interp(edges, x, t)
    return np.diff(edges) / np.diff(tt)


def planar_speed(h_mm, **kw):
    """Mean speed (mm/s) over the middle of the second half of the strip."""
    x, t = front_times(h_mm, **kw)
    length = x[-1]
    a, b = 0.5 * length, 0.9 * length
    return (b - a) / (np.interp(b, x, t) - np.interp(a, x, t))
