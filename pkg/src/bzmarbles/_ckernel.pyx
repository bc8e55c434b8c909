# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled forward-Euler kernel for the multi-marble cell system.

Mirrors ``_pykernel.advance`` exactly; see that module for the contract.
Every cell update reads only the previous step, so the result does not
depend on ``nthreads``.
"""
from cython.parallel cimport prange
from libc.math cimport NAN, isnan


cdef inline void _update_cell(
    Py_ssize_t i,
    const double* u, const double* v, const int* nbr, const double* inv_h2,
    const double* src, double* un, double* vn,
    double eps, double f, double q, double phi, double D, double dt, bint reactions,
    bint detect, double v_thr, double v_rearm, unsigned char* armed, double* cross_t,
    double t_prev,
) noexcept nogil:
    cdef double ui = u[i]
    cdef double vi = v[i]
    cdef double lap = (u[nbr[4 * i]] + u[nbr[4 * i + 1]] + u[nbr[4 * i + 2]] + u[nbr[4 * i + 3]]
                       - 4.0 * ui) * inv_h2[i]
    cdef double du = 0.0
    cdef double dv = 0.0
    cdef double vnew
    if reactions:
        du = (ui - ui * ui - (f * vi + phi) * (ui - q) / (ui + q)) / eps
        dv = ui - vi
    un[i] = ui + dt * (D * lap + du + src[i])
    vnew = vi + dt * dv
    vn[i] = vnew
    if detect:
        if armed[i]:
            if vi < v_thr and vnew >= v_thr:
                if isnan(cross_t[i]):
                    cross_t[i] = t_prev + dt * (v_thr - vi) / (vnew - vi)
                armed[i] = 0
        elif vnew < v_rearm:
            armed[i] = 1


def advance(
    double[::1] u, double[::1] v, int[:, ::1] nbr, double[::1] inv_h2, double[::1] ext,
    double eps, double f, double q, double phi, double D, double dt,
    long nsteps, bint reactions, double t0, long step0,
    int[::1] za_ptr, int[::1] za_idx, int[::1] zb_ptr, int[::1] zb_idx,
    double[::1] k, unsigned char[::1] gate_open, unsigned char[::1] active,
    unsigned char[::1] pending, double ep_on, double ep_off,
    bint detect, double v_thr, double v_rearm, unsigned char[::1] armed, double[::1] cross_t,
    double[::1] un, double[::1] vn, double[::1] src, int nthreads,
):
    cdef Py_ssize_t n = u.shape[0]
    cdef Py_ssize_t n_edges = k.shape[0]
    cdef Py_ssize_t s, i, e, c
    cdef double ma, mb, fl, per_a, per_b, t_prev
    cdef bint any_pending
    cdef long done = 0
    cdef const int* nbr_p = &nbr[0, 0] if n > 0 else NULL

    if n == 0:
        return nsteps, False
    with nogil:
        for s in range(nsteps):
            any_pending = False
            for i in range(n):
                src[i] = ext[i]
            for e in range(n_edges):
                ma = 0.0
                for c in range(za_ptr[e], za_ptr[e + 1]):
                    ma = ma + u[za_idx[c]]
                ma = ma / (za_ptr[e + 1] - za_ptr[e])
                mb = 0.0
                for c in range(zb_ptr[e], zb_ptr[e + 1]):
                    mb = mb + u[zb_idx[c]]
                mb = mb / (zb_ptr[e + 1] - zb_ptr[e])
                if not active[e]:
                    if ma > ep_on or mb > ep_on:
                        pending[e] = 1
                        any_pending = True
                elif ma < ep_off and mb < ep_off:
                    active[e] = 0
                    gate_open[e] = 0
                if gate_open[e] and not pending[e]:
                    fl = k[e] * (ma - mb)
                    # receiver gets fl uniformly, donor gives it in proportion to its own u
                    if fl > 0.0:
                        per_b = fl / (zb_ptr[e + 1] - zb_ptr[e])
                        per_a = fl / (ma * (za_ptr[e + 1] - za_ptr[e]))
                        for c in range(zb_ptr[e], zb_ptr[e + 1]):
                            src[zb_idx[c]] = src[zb_idx[c]] + per_b
                        for c in range(za_ptr[e], za_ptr[e + 1]):
                            src[za_idx[c]] = src[za_idx[c]] - per_a * u[za_idx[c]]
                    elif fl < 0.0:
                        per_b = fl / (mb * (zb_ptr[e + 1] - zb_ptr[e]))
                        per_a = fl / (za_ptr[e + 1] - za_ptr[e])
                        for c in range(zb_ptr[e], zb_ptr[e + 1]):
                            src[zb_idx[c]] = src[zb_idx[c]] + per_b * u[zb_idx[c]]
                        for c in range(za_ptr[e], za_ptr[e + 1]):
                            src[za_idx[c]] = src[za_idx[c]] - per_a
            if any_pending:
                break
            t_prev = t0 + (step0 + s) * dt
            if nthreads > 1:
                for i in prange(n, num_threads=nthreads, schedule="static"):
                    _update_cell(i, &u[0], &v[0], nbr_p, &inv_h2[0], &src[0], &un[0], &vn[0],
                                 eps, f, q, phi, D, dt, reactions,
                                 detect, v_thr, v_rearm, &armed[0], &cross_t[0], t_prev)
            else:
                for i in range(n):
                    _update_cell(i, &u[0], &v[0], nbr_p, &inv_h2[0], &src[0], &un[0], &vn[0],
                                 eps, f, q, phi, D, dt, reactions,
                                 detect, v_thr, v_rearm, &armed[0], &cross_t[0], t_prev)
            for i in range(n):
                u[i] = un[i]
                v[i] = vn[i]
            done += 1
    return done, bool(any_pending)
