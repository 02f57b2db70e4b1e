# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot loops: pair fields, Hamiltonian and the birth-death-move chain.

Array contract is shared with ``kone._fallback``; see that module for the
argument documentation. The radial potential is a piecewise cubic in local
power form (``scipy.interpolate.PPoly`` layout) that vanishes beyond ``R``.
"""
from libc.math cimport sqrt, floor, log

import numpy as np

DEF MAXDIM = 8

cdef struct Geom:
    int d
    bint periodic
    double lo[MAXDIM]
    double hi[MAXDIM]
    double L[MAXDIM]

cdef struct Pot:
    double R
    double R2
    int m
    const double* breaks
    const double* coeffs


cdef Geom _geom(const double[::1] lo, const double[::1] hi, bint periodic) except *:
    cdef Geom g
    cdef int k
    if lo.shape[0] > MAXDIM:
        raise ValueError("dimension too large for compiled kernels")
    g.d = lo.shape[0]
    g.periodic = periodic
    for k in range(g.d):
        g.lo[k] = lo[k]
        g.hi[k] = hi[k]
        g.L[k] = hi[k] - lo[k]
    return g


cdef Pot _pot(double R, const double[::1] breaks, const double[:, ::1] coeffs) except *:
    cdef Pot p
    p.R = R
    p.R2 = R * R
    p.m = coeffs.shape[1]
    p.breaks = &breaks[0]
    p.coeffs = &coeffs[0, 0]
    return p


cdef inline void _ppeval(const Pot* p, double r, double* val, double* der) noexcept nogil:
    cdef int i = 0, lo, hi, mid
    cdef double t, c0, c1, c2, c3
    if p.m <= 8:
        while i < p.m - 1 and r >= p.breaks[i + 1]:
            i += 1
    else:
        lo = 0
        hi = p.m - 1
        while lo < hi:
            mid = (lo + hi + 1) // 2
            if r >= p.breaks[mid]:
                lo = mid
            else:
                hi = mid - 1
        i = lo
    t = r - p.breaks[i]
    c0 = p.coeffs[i]
    c1 = p.coeffs[p.m + i]
    c2 = p.coeffs[2 * p.m + i]
    c3 = p.coeffs[3 * p.m + i]
    val[0] = ((c0 * t + c1) * t + c2) * t + c3
    der[0] = (3.0 * c0 * t + 2.0 * c1) * t + c2


cdef inline double _disp(const Geom* g, const double* a, const double* b, double* dx) noexcept nogil:
    cdef int k
    cdef double r2 = 0.0, v
    for k in range(g.d):
        v = a[k] - b[k]
        if g.periodic:
            v = v - g.L[k] * floor(v / g.L[k] + 0.5)
        dx[k] = v
        r2 = r2 + v * v
    return r2


cdef inline void _accumulate(const Geom* g, const Pot* p, const double* x, const double* y, double wy,
                             double* u, double* grad, bint want_grad) noexcept nogil:
    cdef double dx[MAXDIM]
    cdef double r2, r, val, der, c
    cdef int k
    r2 = _disp(g, x, y, dx)
    if r2 > p.R2:
        return
    r = sqrt(r2)
    _ppeval(p, r, &val, &der)
    u[0] = u[0] + wy * val
    if want_grad and r > 0.0:
        c = wy * der / r
        for k in range(g.d):
            grad[k] = grad[k] + c * dx[k]


cdef void _field_at(const Geom* g, const Pot* p, const double* x, const double[:, ::1] pos,
                    const double[::1] w, Py_ssize_t n, Py_ssize_t skip,
                    const double[:, ::1] bpos, const double[::1] bw,
                    double* u, double* grad, bint want_grad) noexcept nogil:
    cdef Py_ssize_t j
    cdef int k
    u[0] = 0.0
    for k in range(g.d):
        grad[k] = 0.0
    for j in range(n):
        if j == skip:
            continue
        _accumulate(g, p, x, &pos[j, 0], w[j], u, grad, want_grad)
    for j in range(bw.shape[0]):
        _accumulate(g, p, x, &bpos[j, 0], bw[j], u, grad, want_grad)


def local_field(const double[:, ::1] pos, const double[::1] w, Py_ssize_t n, const double[::1] x,
                Py_ssize_t skip, const double[:, ::1] bpos, const double[::1] bw,
                const double[::1] lo, const double[::1] hi, bint periodic,
                double R, const double[::1] breaks, const double[:, ::1] coeffs):
    cdef Geom g = _geom(lo, hi, periodic)
    cdef Pot p = _pot(R, breaks, coeffs)
    cdef double u = 0.0
    grad = np.zeros(g.d)
    cdef double[::1] gv = grad
    _field_at(&g, &p, &x[0], pos, w, n, skip, bpos, bw, &u, &gv[0], True)
    return u, grad


def interaction_fields(const double[:, ::1] pos, const double[::1] w, Py_ssize_t n,
                       const double[:, ::1] bpos, const double[::1] bw,
                       const double[::1] lo, const double[::1] hi, bint periodic,
                       double R, const double[::1] breaks, const double[:, ::1] coeffs):
    """Per-atom ``u_i = sum_{j != i} s_j phi(x_i, x_j)`` and its x-gradient, via a cell list.

    Returns ``(u, grad, u_boundary)``; ``u`` includes the boundary part.
    """
    cdef Geom g = _geom(lo, hi, periodic)
    cdef Pot p = _pot(R, breaks, coeffs)
    cdef int d = g.d
    u_arr = np.zeros(n)
    ub_arr = np.zeros(n)
    g_arr = np.zeros((n, d))
    cdef double[::1] u = u_arr
    cdef double[::1] ub = ub_arr
    cdef double[:, ::1] gr = g_arr
    cdef int nc[MAXDIM]
    cdef double cs[MAXDIM]
    cdef int k, ncell = 1
    cdef Py_ssize_t i, j
    cdef bint brute = n < 32
    cdef double tmp
    for k in range(d):
        nc[k] = <int> floor(g.L[k] / R) if R > 0 else 1
        if nc[k] < 1:
            nc[k] = 1
        if nc[k] > 256:
            nc[k] = 256
        if periodic and nc[k] < 3:
            brute = True
        cs[k] = g.L[k] / nc[k]
        ncell *= nc[k]
    if ncell > 1 << 22:
        brute = True
    if brute:
        for i in range(n):
            _field_at(&g, &p, &pos[i, 0], pos, w, n, i, bpos, bw[:0], &u[i], &gr[i, 0], True)
    else:
        head = np.full(ncell, -1, dtype=np.intp)
        nxt = np.full(n, -1, dtype=np.intp)
        cell = np.zeros(n, dtype=np.intp)
        _cell_fields(&g, &p, pos, w, n, nc, cs, head, nxt, cell, u, gr)
    for i in range(n):
        tmp = 0.0
        for j in range(bw.shape[0]):
            _accumulate(&g, &p, &pos[i, 0], &bpos[j, 0], bw[j], &tmp, &gr[i, 0], True)
        ub[i] = tmp
        u[i] = u[i] + tmp
    return u_arr, g_arr, ub_arr


cdef void _cell_fields(const Geom* g, const Pot* p, const double[:, ::1] pos, const double[::1] w,
                       Py_ssize_t n, int* nc, double* cs,
                       Py_ssize_t[::1] head, Py_ssize_t[::1] nxt, Py_ssize_t[::1] cell,
                       double[::1] u, double[:, ::1] gr) noexcept:
    cdef int d = g.d
    cdef int k, c, o, t, noff = 1
    cdef int ci[MAXDIM]
    cdef int cj[MAXDIM]
    cdef Py_ssize_t i, j
    cdef bint valid
    # bin atoms; push in descending order so each cell lists ascending indices
    for i in range(n - 1, -1, -1):
        c = 0
        for k in range(d):
            t = <int> floor((pos[i, k] - g.lo[k]) / cs[k])
            if t < 0:
                t = 0
            if t >= nc[k]:
                t = nc[k] - 1
            c = c * nc[k] + t
        cell[i] = c
        nxt[i] = head[c]
        head[c] = i
    for k in range(d):
        noff *= 3
    for i in range(n):
        c = cell[i]
        for k in range(d - 1, -1, -1):
            ci[k] = c % nc[k]
            c = c // nc[k]
        for o in range(noff):
            t = o
            for k in range(d - 1, -1, -1):
                cj[k] = ci[k] + (t % 3) - 1
                t = t // 3
            valid = True
            c = 0
            for k in range(d):
                if cj[k] < 0 or cj[k] >= nc[k]:
                    if g.periodic:
                        cj[k] = (cj[k] + nc[k]) % nc[k]
                    else:
                        valid = False
                        break
                c = c * nc[k] + cj[k]
            if not valid:
                continue
            j = head[c]
            while j >= 0:
                if j != i:
                    _accumulate(g, p, &pos[i, 0], &pos[j, 0], w[j], &u[i], &gr[i, 0], True)
                j = nxt[j]


def hamiltonian(const double[:, ::1] pos, const double[::1] w, Py_ssize_t n,
                const double[:, ::1] bpos, const double[::1] bw,
                const double[::1] lo, const double[::1] hi, bint periodic,
                double R, const double[::1] breaks, const double[:, ::1] coeffs):
    """``1/2 sum_{i != j} s_i s_j phi + sum_{i, b} s_i s_b phi`` over boundary atoms ``b``."""
    u, _, ub = interaction_fields(pos, w, n, bpos, bw, lo, hi, periodic, R, breaks, coeffs)
    cdef double[::1] uv = u
    cdef double[::1] ubv = ub
    cdef double inner = 0.0, cross = 0.0
    cdef Py_ssize_t i
    for i in range(n):
        inner = inner + w[i] * (uv[i] - ubv[i])
        cross = cross + w[i] * ubv[i]
    return 0.5 * inner + cross


def mh_block(double[:, ::1] pos, double[::1] w, Py_ssize_t[::1] nbox,
             const double[:, ::1] bpos, const double[::1] bw,
             const double[::1] lo, const double[::1] hi, bint periodic,
             double R, const double[::1] breaks, const double[:, ::1] coeffs,
             double[::1] energy, const double[::1] cum_probs, double sigma_mass,
             const double[::1] u_move, const double[::1] u_index, const double[::1] u_accept,
             const double[::1] birth_s, const double[:, ::1] birth_x,
             const double[::1] resample_s, const double[:, ::1] jump,
             long long[:, ::1] counts, bint interacting):
    """Run up to ``len(u_move)`` birth/death/resample/move steps in place.

    Returns the number of steps performed; stops early when a birth would
    exceed the buffer capacity (the caller grows the buffers and resumes).
    """
    cdef Geom g = _geom(lo, hi, periodic)
    cdef Pot p = _pot(R, breaks, coeffs)
    cdef int d = g.d
    cdef Py_ssize_t K = u_move.shape[0], cap = w.shape[0]
    cdef Py_ssize_t step, n, i, last
    cdef int mv, k
    cdef double log_m = log(sigma_mass)
    cdef double u0, u1, dH, log_a, s_new, v
    cdef double grad[MAXDIM]
    cdef double xn[MAXDIM]
    cdef bint inside
    n = nbox[0]
    for step in range(K):
        mv = 0
        while mv < 3 and u_move[step] >= cum_probs[mv]:
            mv += 1
        counts[mv, 0] += 1
        if mv == 0:
            if n >= cap:
                counts[mv, 0] -= 1
                nbox[0] = n
                return step
            u0 = 0.0
            if interacting:
                _field_at(&g, &p, &birth_x[step, 0], pos, w, n, -1, bpos, bw, &u0, grad, False)
            dH = birth_s[step] * u0
            log_a = log_m - log(<double> (n + 1)) - dH
            if log(u_accept[step]) < log_a:
                for k in range(d):
                    pos[n, k] = birth_x[step, k]
                w[n] = birth_s[step]
                n += 1
                energy[0] = energy[0] + dH
                counts[mv, 1] += 1
            continue
        if n == 0:
            continue
        i = <Py_ssize_t> (u_index[step] * n)
        if i >= n:
            i = n - 1
        u0 = 0.0
        if interacting:
            _field_at(&g, &p, &pos[i, 0], pos, w, n, i, bpos, bw, &u0, grad, False)
        if mv == 1:
            dH = -w[i] * u0
            log_a = log(<double> n) - log_m - dH
            if log(u_accept[step]) < log_a:
                last = n - 1
                for k in range(d):
                    pos[i, k] = pos[last, k]
                w[i] = w[last]
                n -= 1
                energy[0] = energy[0] + dH
                counts[mv, 1] += 1
        elif mv == 2:
            s_new = resample_s[step]
            dH = (s_new - w[i]) * u0
            if log(u_accept[step]) < -dH:
                w[i] = s_new
                energy[0] = energy[0] + dH
                counts[mv, 1] += 1
        else:
            inside = True
            for k in range(d):
                v = pos[i, k] + jump[step, k]
                if periodic:
                    v = v - g.L[k] * floor((v - g.lo[k]) / g.L[k])
                elif v < g.lo[k] or v > g.hi[k]:
                    inside = False
                xn[k] = v
            if not inside:
                continue
            u1 = 0.0
            if interacting:
                _field_at(&g, &p, xn, pos, w, n, i, bpos, bw, &u1, grad, False)
            dH = w[i] * (u1 - u0)
            if log(u_accept[step]) < -dH:
                for k in range(d):
                    pos[i, k] = xn[k]
                energy[0] = energy[0] + dH
                counts[mv, 1] += 1
    nbox[0] = n
    return K
