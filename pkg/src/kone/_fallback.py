"""Numpy implementation of the kernel contract in ``_kernels.pyx``.

Shared argument conventions:

``pos, w, n``
    atom buffers; only the first ``n`` rows are live.
``bpos, bw``
    boundary-condition atoms (outside the window); empty arrays when absent.
``lo, hi, periodic``
    window box; ``periodic`` switches on the minimum-image convention.
``R, breaks, coeffs``
    radial potential as a piecewise cubic in local power form
    (``coeffs[k, i]`` multiplies ``(r - breaks[i]) ** (3 - k)``), zero for
    ``r > R``.

``local_field`` and ``mh_block`` reproduce the compiled arithmetic
operation by operation, so both backends give bit-identical chains.
``interaction_fields`` is brute force here (the compiled version uses a cell
list), so the two agree to rounding only.
"""
from __future__ import annotations

import math

import numpy as np


def _ppeval(r, breaks, coeffs):
    m = coeffs.shape[1]
    i = np.clip(np.searchsorted(breaks, r, side="right") - 1, 0, m - 1)
    t = r - breaks[i]
    c0, c1, c2, c3 = coeffs[0, i], coeffs[1, i], coeffs[2, i], coeffs[3, i]
    val = ((c0 * t + c1) * t + c2) * t + c3
    der = (3.0 * c0 * t + 2.0 * c1) * t + c2
    return val, der


def _disp(x, ys, lo, hi, periodic):
    dx = x - ys
    if periodic:
        L = hi - lo
        dx = dx - L * np.floor(dx / L + 0.5)
    r2 = dx[:, 0] * dx[:, 0]
    for k in range(1, dx.shape[1]):
        r2 = r2 + dx[:, k] * dx[:, k]
    return dx, r2


def _field_terms(x, ys, wy, lo, hi, periodic, R, breaks, coeffs):
    """Contributions of the atoms ``ys`` within range of ``x``, in index order."""
    dx, r2 = _disp(x, ys, lo, hi, periodic)
    near = r2 <= R * R
    dx, r2, wy = dx[near], r2[near], wy[near]
    r = np.sqrt(r2)
    val, der = _ppeval(r, breaks, coeffs)
    contrib = wy * val
    with np.errstate(divide="ignore", invalid="ignore"):
        c = np.where(r > 0.0, wy * der / r, 0.0)
    return contrib, c[:, None] * dx


def _field_at(x, pos, w, n, skip, bpos, bw, lo, hi, periodic, R, breaks, coeffs):
    d = lo.shape[0]
    idx = np.arange(n)
    if 0 <= skip < n:
        idx = idx[idx != skip]
    parts = [_field_terms(x, ys, wy, lo, hi, periodic, R, breaks, coeffs)
             for ys, wy in ((pos[idx], w[idx]), (bpos, bw)) if wy.shape[0]]
    if not parts:
        return 0.0, np.zeros(d)
    contrib = np.concatenate([c for c, _ in parts])
    gterms = np.concatenate([g for _, g in parts])
    if contrib.shape[0] == 0:
        return 0.0, np.zeros(d)
    # cumulative sums add strictly left to right, matching the compiled loop
    return float(np.cumsum(contrib)[-1]), np.cumsum(gterms, axis=0)[-1]


def local_field(pos, w, n, x, skip, bpos, bw, lo, hi, periodic, R, breaks, coeffs):
    return _field_at(np.asarray(x, float), pos, w, n, skip, bpos, bw, lo, hi, periodic, R, breaks, coeffs)


def _pair_block(xs, ys, wy, lo, hi, periodic, R, breaks, coeffs, diag_offset=None):
    dx = xs[:, None, :] - ys[None, :, :]
    if periodic:
        L = hi - lo
        dx = dx - L * np.floor(dx / L + 0.5)
    r2 = np.einsum("ijk,ijk->ij", dx, dx)
    near = r2 <= R * R
    if diag_offset is not None:
        rows = np.arange(xs.shape[0])
        near[rows, rows + diag_offset] = False
    r = np.sqrt(np.where(near, r2, 0.0))
    val, der = _ppeval(r, breaks, coeffs)
    val = np.where(near, val, 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        c = np.where(near & (r > 0.0), der / r, 0.0)
    u = val @ wy
    grad = np.einsum("ij,ijk->ik", c * wy[None, :], dx)
    return u, grad


def interaction_fields(pos, w, n, bpos, bw, lo, hi, periodic, R, breaks, coeffs):
    d = lo.shape[0]
    xs, ws = pos[:n], w[:n]
    u = np.zeros(n)
    grad = np.zeros((n, d))
    ub = np.zeros(n)
    chunk = 512
    for a in range(0, n, chunk):
        sl = slice(a, min(a + chunk, n))
        u[sl], grad[sl] = _pair_block(xs[sl], xs, ws, lo, hi, periodic, R, breaks, coeffs, a)
    if bw.shape[0] and n:
        ub, gb = _pair_block(xs, bpos, bw, lo, hi, False, R, breaks, coeffs)
        u = u + ub
        grad = grad + gb
    return u, grad, ub


def hamiltonian(pos, w, n, bpos, bw, lo, hi, periodic, R, breaks, coeffs):
    u, _, ub = interaction_fields(pos, w, n, bpos, bw, lo, hi, periodic, R, breaks, coeffs)
    ws = w[:n]
    return 0.5 * float(np.sum(ws * (u - ub))) + float(np.sum(ws * ub))


def mh_block(pos, w, nbox, bpos, bw, lo, hi, periodic, R, breaks, coeffs,
             energy, cum_probs, sigma_mass, u_move, u_index, u_accept,
             birth_s, birth_x, resample_s, jump, counts, interacting):
    d = lo.shape[0]
    cap = w.shape[0]
    L = hi - lo
    log_m = math.log(sigma_mass)
    n = int(nbox[0])
    K = u_move.shape[0]
    field_args = (bpos, bw, lo, hi, periodic, R, breaks, coeffs)

    def field(x, skip):
        if not interacting:
            return 0.0
        return _field_at(x, pos, w, n, skip, *field_args)[0]

    for step in range(K):
        mv = 0
        while mv < 3 and u_move[step] >= cum_probs[mv]:
            mv += 1
        counts[mv, 0] += 1
        la = math.log(u_accept[step]) if u_accept[step] > 0.0 else -math.inf
        if mv == 0:
            if n >= cap:
                counts[mv, 0] -= 1
                nbox[0] = n
                return step
            dH = birth_s[step] * field(birth_x[step], -1)
            if la < log_m - math.log(float(n + 1)) - dH:
                pos[n] = birth_x[step]
                w[n] = birth_s[step]
                n += 1
                energy[0] = energy[0] + dH
                counts[mv, 1] += 1
            continue
        if n == 0:
            continue
        i = int(u_index[step] * n)
        if i >= n:
            i = n - 1
        u0 = field(pos[i], i)
        if mv == 1:
            dH = -w[i] * u0
            if la < math.log(float(n)) - log_m - dH:
                pos[i] = pos[n - 1]
                w[i] = w[n - 1]
                n -= 1
                energy[0] = energy[0] + dH
                counts[mv, 1] += 1
        elif mv == 2:
            dH = (resample_s[step] - w[i]) * u0
            if la < -dH:
                w[i] = resample_s[step]
                energy[0] = energy[0] + dH
                counts[mv, 1] += 1
        else:
            xn = pos[i] + jump[step]
            if periodic:
                xn = xn - L * np.floor((xn - lo) / L)
            elif np.any(xn < lo) or np.any(xn > hi):
                continue
            dH = w[i] * (field(xn, i) - u0)
            if la < -dH:
                pos[i] = xn
                energy[0] = energy[0] + dH
                counts[mv, 1] += 1
    nbox[0] = n
    return K
