"""Pure numpy fallback for the forward-Euler cell-system kernel.

Per step:

1. zone means of ``u`` for both sides of every contact edge;
2. episode bookkeeping: an inactive edge whose zone mean on either side
   exceeds ``ep_on`` is flagged in ``pending`` and the call returns *before*
   this step so the caller can draw the gate; an active edge whose two means
   fall below ``ep_off`` is deactivated and closed;
3. source = ``ext`` plus, for open edges, ``k * (mean_a - mean_b)`` spread
   uniformly over the receiving side and taken from the donating side in
   proportion to each cell's ``u`` (so no cell is drained below zero);
4. forward Euler on every cell; ``v`` crossing ``v_thr`` upwards while armed
   stores the interpolated crossing time in ``cross_t`` (first one only) and
   disarms the cell until ``v`` falls below ``v_rearm``.

Returns ``(steps_done, pending_flag)``.
"""
from __future__ import annotations

import numpy as np


def advance(u, v, nbr, inv_h2, ext, eps, f, q, phi, D, dt, nsteps, reactions, t0, step0,
            za_ptr, za_idx, zb_ptr, zb_idx, k, gate_open, active, pending, ep_on, ep_off,
            detect, v_thr, v_rearm, armed, cross_t, un, vn, src, nthreads):
    n = u.shape[0]
    if n == 0:
        return nsteps, False
    n_edges = k.shape[0]
    na = np.diff(za_ptr)
    nb = np.diff(zb_ptr)
    seg_a = np.repeat(np.arange(n_edges), na)
    seg_b = np.repeat(np.arange(n_edges), nb)
    n0, n1, n2, n3 = (np.ascontiguousarray(nbr[:, j]) for j in range(4))
    done = 0
    for s in range(nsteps):
        np.copyto(src, ext)
        if n_edges:
            ma = np.bincount(seg_a, weights=u[za_idx], minlength=n_edges) / na
            mb = np.bincount(seg_b, weights=u[zb_idx], minlength=n_edges) / nb
            idle = active == 0
            fire = idle & ((ma > ep_on) | (mb > ep_on))
            quiet = ~idle & (ma < ep_off) & (mb < ep_off)
            active[quiet] = 0
            gate_open[quiet] = 0
            if fire.any():
                pending[fire] = 1
                return done, True
            flowing = (gate_open != 0) & (pending == 0)
            if flowing.any():
                fl = np.where(flowing, k * (ma - mb), 0.0)
                out_a = fl > 0.0
                with np.errstate(divide="ignore", invalid="ignore"):
                    per_b = np.where(out_a, fl / nb, fl / (mb * nb))
                    per_a = np.where(out_a, fl / (ma * na), fl / na)
                w_b = np.where(out_a[seg_b], 1.0, u[zb_idx])
                w_a = np.where(out_a[seg_a], u[za_idx], 1.0)
                np.add.at(src, zb_idx, np.where(fl[seg_b] != 0.0, per_b[seg_b] * w_b, 0.0))
                np.subtract.at(src, za_idx, np.where(fl[seg_a] != 0.0, per_a[seg_a] * w_a, 0.0))
        t_prev = t0 + (step0 + s) * dt
        lap = (u[n0] + u[n1] + u[n2] + u[n3] - 4.0 * u) * inv_h2
        if reactions:
            du = (u - u * u - (f * v + phi) * (u - q) / (u + q)) / eps
            dv = u - v
        else:
            du = 0.0
            dv = 0.0
        np.copyto(un, u + dt * (D * lap + du + src))
        np.copyto(vn, v + dt * dv)
        if detect:
            up = (armed != 0) & (v < v_thr) & (vn >= v_thr)
            if up.any():
                first = up & np.isnan(cross_t)
                cross_t[first] = t_prev + dt * (v_thr - v[first]) / (vn[first] - v[first])
            rearm = (armed == 0) & (vn < v_rearm)
            armed[up] = 0
            armed[rearm] = 1
        np.copyto(u, un)
        np.copyto(v, vn)
        done += 1
    return done, False
