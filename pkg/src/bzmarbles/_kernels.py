"""Kernel selection and the array bundle the kernels operate on.

The compiled kernel is used when the extension is importable; setting
``BZMARBLES_PURE_PYTHON=1`` forces the numpy fallback.
"""
from __future__ import annotations

import math
import os
from dataclasses import dataclass, field

import numpy as np

from . import _pykernel

try:
    if os.environ.get("BZMARBLES_PURE_PYTHON", "") not in ("", "0"):
        raise ImportError("pure python requested")
    from . import _ckernel
except ImportError:  # pragma: no cover - depends on the build
    _ckernel = None

BACKEND = "cython" if _ckernel is not None else "python"

__all__ = ["BACKEND", "available_backends", "Coupling", "CellSystem", "advance"]


def available_backends() -> list[str]:
    return ["cython", "python"] if _ckernel is not None else ["python"]


def _impl(backend: str | None):
    name = backend or BACKEND
    if name == "cython":
        if _ckernel is None:
            raise RuntimeError("compiled kernel is not built; reinstall the package")
        return _ckernel.advance
    if name == "python":
        return _pykernel.advance
    raise ValueError(f"unknown kernel backend {name!r}")


_EMPTY_I = np.zeros(1, dtype=np.int32)


@dataclass(eq=False)
class Coupling:
    """Contact zones and per-edge gate state in kernel layout (CSR zones)."""

    za_ptr: np.ndarray
    za_idx: np.ndarray
    zb_ptr: np.ndarray
    zb_idx: np.ndarray
    k: np.ndarray
    ep_on: float = 0.1
    ep_off: float = 0.02
    gate_open: np.ndarray = field(default=None)
    active: np.ndarray = field(default=None)
    pending: np.ndarray = field(default=None)

    def __post_init__(self):
        m = self.k.shape[0]
        self.za_ptr = np.ascontiguousarray(self.za_ptr, dtype=np.int32)
        self.za_idx = np.ascontiguousarray(self.za_idx, dtype=np.int32)
        self.zb_ptr = np.ascontiguousarray(self.zb_ptr, dtype=np.int32)
        self.zb_idx = np.ascontiguousarray(self.zb_idx, dtype=np.int32)
        self.k = np.ascontiguousarray(self.k, dtype=np.float64)
        for name in ("gate_open", "active", "pending"):
            if getattr(self, name) is None:
                setattr(self, name, np.zeros(m, dtype=np.uint8))

    @classmethod
    def empty(cls) -> "Coupling":
        z = np.zeros(1, dtype=np.int32)
        return cls(z, z[:0], z, z[:0], np.zeros(0))

    @property
    def n_edges(self) -> int:
        return int(self.k.shape[0])


@dataclass(eq=False)
class CellSystem:
    """Flat cell arrays for one or more marbles plus scratch buffers."""

    nbr: np.ndarray
    inv_h2: np.ndarray
    coupling: Coupling = None
    v_thr: float = math.inf
    v_rearm: float = -math.inf
    detect: bool = False

    def __post_init__(self):
        self.nbr = np.ascontiguousarray(self.nbr, dtype=np.int32)
        self.inv_h2 = np.ascontiguousarray(self.inv_h2, dtype=np.float64)
        n = self.nbr.shape[0]
        if self.coupling is None:
            self.coupling = Coupling.empty()
        self.armed = np.ones(n, dtype=np.uint8)
        self.cross_t = np.full(n, np.nan)
        self._un = np.empty(n)
        self._vn = np.empty(n)
        self._src = np.empty(n)

    @property
    def n_cells(self) -> int:
        return int(self.nbr.shape[0])

    def enable_detection(self, v_thr: float, v_rearm: float, v_now: np.ndarray):
        self.detect = True
        self.v_thr = float(v_thr)
        self.v_rearm = float(v_rearm)
        self.armed[:] = (v_now < v_rearm).astype(np.uint8)
        self.cross_t[:] = np.nan

    def harvest_crossings(self) -> tuple[np.ndarray, np.ndarray]:
        """Cells that crossed the detection threshold since the last harvest."""
        hit = np.nonzero(~np.isnan(self.cross_t))[0]
        times = self.cross_t[hit].copy()
        self.cross_t[hit] = np.nan
        return hit, times


def advance(system: CellSystem, u: np.ndarray, v: np.ndarray, ext: np.ndarray, kp, D: float,
            dt: float, nsteps: int, *, reactions: bool = True, t0: float = 0.0, step0: int = 0,
            threads: int = 1, backend: str | None = None) -> tuple[int, bool]:
    """Run up to ``nsteps`` steps in place; stops early on a new contact episode."""
    c = system.coupling
    return _impl(backend)(
        u, v, system.nbr, system.inv_h2, ext,
        kp.epsilon, kp.f, kp.q, kp.phi, float(D), float(dt),
        int(nsteps), bool(reactions), float(t0), int(step0),
        c.za_ptr, c.za_idx, c.zb_ptr, c.zb_idx, c.k, c.gate_open, c.active, c.pending,
        float(c.ep_on), float(c.ep_off),
        bool(system.detect), system.v_thr, system.v_rearm, system.armed, system.cross_t,
        system._un, system._vn, system._src, int(threads),
    )
