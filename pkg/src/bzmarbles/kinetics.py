"""Two-variable light-sensitive Oregonator kinetics.

``u`` is the activator (HBrO2 proxy) and ``v`` the oxidised catalyst::

    du/dt = (u - u^2 - (f*v + phi) * (u - q) / (u + q)) / epsilon
    dv/dt = u - v

Everything here is a pure function of its inputs.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, replace
from typing import NamedTuple

import numpy as np

from .errors import ConfigurationError, DomainError, NumericError

__all__ = [
    "KineticsParams",
    "FixedPoint",
    "PRESETS",
    "preset",
    "reaction_rates",
    "nullcline_residual",
    "jacobian",
    "fixed_points",
    "rest_state",
    "pulse_peak_v",
]


@dataclass(frozen=True)
class KineticsParams:
    """Oregonator constants plus the mapping to physical units.

    ``time_unit_s`` is the number of seconds in one dimensionless time unit and
    ``diffusion_u`` the activator diffusion coefficient in mm^2/s; the solver
    works with ``diffusion_u * time_unit_s`` (mm^2 per dimensionless time).
    """

    epsilon: float = 0.04
    f: float = 1.4
    q: float = 0.002
    phi: float = 0.05
    time_unit_s: float = 15.0
    diffusion_u: float = 0.0411

    def __post_init__(self):
        vals = (self.epsilon, self.f, self.q, self.phi, self.time_unit_s, self.diffusion_u)
        if not all(math.isfinite(x) for x in vals):
            raise ConfigurationError(f"kinetics parameters must be finite: {self}")
        if self.epsilon <= 0:
            raise ConfigurationError(f"epsilon must be > 0, got {self.epsilon}")
        if self.f <= 0:
            raise ConfigurationError(f"f must be > 0, got {self.f}")
        if not 0 < self.q < 1:
            raise ConfigurationError(f"q must lie in (0, 1), got {self.q}")
        if self.phi < 0:
            raise ConfigurationError(f"phi must be >= 0, got {self.phi}")
        if self.time_unit_s <= 0:
            raise ConfigurationError(f"time_unit_s must be > 0, got {self.time_unit_s}")
        if self.diffusion_u <= 0:
            raise ConfigurationError(f"diffusion_u must be > 0, got {self.diffusion_u}")

    @property
    def diffusion_dimless(self) -> float:
        """Activator diffusion in mm^2 per dimensionless time unit."""
        return self.diffusion_u * self.time_unit_s

    def with_(self, **changes) -> "KineticsParams":
        return replace(self, **changes)

    def to_dict(self) -> dict:
        return asdict(self)


PRESETS = {
    "excitable": KineticsParams(),
    # f=0.95 with phi=0.01 has a stable fixed point; phi=0.005 gives a limit cycle.
    "oscillatory": KineticsParams(f=0.95, phi=0.005),
}


def preset(name: str, **overrides) -> KineticsParams:
    try:
        base = PRESETS[name]
    except KeyError:
        raise ConfigurationError(
            f"unknown kinetics preset {name!r}; choose from {sorted(PRESETS)}"
        ) from None
    return replace(base, **overrides) if overrides else base


def reaction_rates(u, v, p: KineticsParams):
    """Return ``(du_dt, dv_dt)`` for scalar or array inputs."""
    u_arr = np.asarray(u, dtype=float)
    v_arr = np.asarray(v, dtype=float)
    if not (np.all(np.isfinite(u_arr)) and np.all(np.isfinite(v_arr))):
        raise DomainError("reaction_rates received non-finite u or v (upstream blow-up?)")
    du = (u_arr - u_arr * u_arr - (p.f * v_arr + p.phi) * (u_arr - p.q) / (u_arr + p.q)) / p.epsilon
    dv = u_arr - v_arr
    if du.ndim == 0:
        return float(du), float(dv)
    return du, dv


def nullcline_residual(u, p: KineticsParams):
    """u-nullcline evaluated on the v-nullcline ``v = u``; zero at fixed points."""
    return u - u * u - (p.f * u + p.phi) * (u - p.q) / (u + p.q)


def jacobian(u: float, v: float, p: KineticsParams) -> np.ndarray:
    dfu = (1.0 - 2.0 * u - (p.f * v + p.phi) * 2.0 * p.q / (u + p.q) ** 2) / p.epsilon
    dfv = -p.f * (u - p.q) / (u + p.q) / p.epsilon
    return np.array([[dfu, dfv], [1.0, -1.0]])


class FixedPoint(NamedTuple):
    u: float
    v: float
    stable: bool
    trace: float
    det: float


def fixed_points(p: KineticsParams, scan_step: float = 1e-5, xtol: float = 0.0) -> list[FixedPoint]:
    """All fixed points with ``u`` in ``[0, 1 + f]``, tagged by linear stability.

    Sign changes of the nullcline residual are located on a uniform grid and
    refined by bisection.  A root sitting exactly on a grid node is kept as is.
    """
    hi = 1.0 + p.f
    n = int(math.ceil(hi / scan_step))
    grid = np.linspace(0.0, hi, n + 1)
    g = nullcline_residual(grid, p)
    roots: list[float] = [float(x) for x in grid[g == 0.0]]
    sign = np.sign(g)
    brackets = np.nonzero(sign[:-1] * sign[1:] < 0)[0]
    for i in brackets:
        roots.append(_bisect(lambda x: nullcline_residual(x, p), grid[i], grid[i + 1], xtol))
    roots.sort()
    merged: list[float] = []
    for r in roots:
        if not merged or r - merged[-1] >= 1e-9:
            merged.append(r)
    out = []
    for r in merged:
        jac = jacobian(r, r, p)
        tr = float(np.trace(jac))
        det = float(np.linalg.det(jac))
        out.append(FixedPoint(r, r, tr < 0 and det > 0, tr, det))
    return out


def _bisect(fn, lo: float, hi: float, xtol: float, max_iter: int = 2000) -> float:
    flo, fhi = fn(lo), fn(hi)
    if flo == 0:
        return float(lo)
    if fhi == 0:
        return float(hi)
    if flo * fhi > 0:
        raise NumericError(f"bracket [{lo}, {hi}] does not straddle a root (f={flo}, {fhi})")
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        fm = fn(mid)
        if fm == 0:
            return float(mid)
        if mid in (lo, hi) or hi - lo < xtol:
            # bracket exhausted: keep whichever end is closer to zero
            return float(lo if abs(flo) <= abs(fhi) else hi)
        if flo * fm < 0:
            hi, fhi = mid, fm
        else:
            lo, flo = mid, fm
    raise NumericError(f"bisection did not converge in [{lo}, {hi}] after {max_iter} iterations")


def rest_state(p: KineticsParams) -> tuple[float, float]:
    """The unique stable fixed point; raises if the medium has none or several."""
    stable = [fp for fp in fixed_points(p) if fp.stable]
    if len(stable) != 1:
        raise NumericError(f"expected exactly one stable fixed point, found {len(stable)} for {p}")
    return stable[0].u, stable[0].v


def pulse_peak_v(p: KineticsParams, kick: float = 0.3, horizon: float = 20.0, dt: float = 1e-4) -> float:
    """Peak of ``v`` during a single-cell pulse kicked ``kick`` above rest.

    Used to place the per-cell detection threshold halfway between rest and
    pulse maximum.  Forward Euler at a step well inside its stability limit.
    """
    u, v = rest_state(p)
    u += kick
    vmax = v
    eps, f, q, phi = p.epsilon, p.f, p.q, p.phi
    for _ in range(int(horizon / dt)):
        du = (u - u * u - (f * v + phi) * (u - q) / (u + q)) / eps
        dv = u - v
        u += dt * du
        v += dt * dv
        if v > vmax:
            vmax = v
    return vmax
