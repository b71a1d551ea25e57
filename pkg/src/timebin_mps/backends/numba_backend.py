"""Numba-compiled implementations of the hot kernels.

Same contracts as :mod:`numpy_backend`; explicit loops replace the
transpose/reshape gymnastics so the whole per-swap / per-gate path (including
the LAPACK calls) runs without Python overhead.
"""

import numba
import numpy as np

from . import _truncation

NAME = "numba"

_select_rank = numba.njit(cache=True)(_truncation.select_rank)


@numba.njit(cache=True)
def swap_pair(a, b, center_right, max_bond, cutoff):
    al, p, m = a.shape
    q, ar = b.shape[1], b.shape[2]
    c = a.reshape(al * p, m) @ b.reshape(m, q * ar)
    theta = np.empty((al * q, p * ar), np.complex128)
    for i in range(al):
        for pp in range(p):
            for qq in range(q):
                for j in range(ar):
                    theta[i * q + qq, pp * ar + j] = c[i * p + pp, qq * ar + j]
    u, s, vh = np.linalg.svd(theta, False)
    k, disc = _select_rank(s, max_bond, cutoff)
    if center_right:
        a2 = np.ascontiguousarray(u[:, :k]).reshape(al, q, k)
        b2 = (s[:k].reshape(k, 1) * vh[:k]).reshape(k, p, ar)
    else:
        a2 = (np.ascontiguousarray(u[:, :k]) * s[:k]).reshape(al, q, k)
        b2 = np.ascontiguousarray(vh[:k]).reshape(k, p, ar)
    return a2, b2, disc


@numba.njit(cache=True)
def gate2(a, b, g, center_right, max_bond, cutoff):
    al, p, m = a.shape
    q, ar = b.shape[1], b.shape[2]
    c = a.reshape(al * p, m) @ b.reshape(m, q * ar)
    # regroup to (phys, bonds), hit with the gate, regroup back
    pm = np.empty((p * q, al * ar), np.complex128)
    for i in range(al):
        for pp in range(p):
            for qq in range(q):
                for j in range(ar):
                    pm[pp * q + qq, i * ar + j] = c[i * p + pp, qq * ar + j]
    pm = g @ pm
    theta = np.empty((al * p, q * ar), np.complex128)
    for i in range(al):
        for pp in range(p):
            for qq in range(q):
                for j in range(ar):
                    theta[i * p + pp, qq * ar + j] = pm[pp * q + qq, i * ar + j]
    u, s, vh = np.linalg.svd(theta, False)
    k, disc = _select_rank(s, max_bond, cutoff)
    if center_right:
        a2 = np.ascontiguousarray(u[:, :k]).reshape(al, p, k)
        b2 = (s[:k].reshape(k, 1) * vh[:k]).reshape(k, q, ar)
    else:
        a2 = (np.ascontiguousarray(u[:, :k]) * s[:k]).reshape(al, p, k)
        b2 = np.ascontiguousarray(vh[:k]).reshape(k, q, ar)
    return a2, b2, disc, k


@numba.njit(cache=True)
def gate3_cr(a, b, c, g, max_bond, cutoff):
    al, p, m1 = a.shape
    q, m2 = b.shape[1], b.shape[2]
    r, ar = c.shape[1], c.shape[2]
    t1 = a.reshape(al * p, m1) @ b.reshape(m1, q * m2)
    t2 = t1.reshape(al * p * q, m2) @ c.reshape(m2, r * ar)      # [(al p q), (r ar)]
    pqr = p * q * r
    pm = np.empty((pqr, al * ar), np.complex128)
    for i in range(al):
        for pp in range(p * q):
            for rr in range(r):
                for j in range(ar):
                    pm[pp * r + rr, i * ar + j] = t2[i * p * q + pp, rr * ar + j]
    pm = g @ pm
    m = np.empty((al * p, q * r * ar), np.complex128)
    for i in range(al):
        for pp in range(p):
            for qq in range(q):
                for rr in range(r):
                    for j in range(ar):
                        m[i * p + pp, (qq * r + rr) * ar + j] = (
                            pm[(pp * q + qq) * r + rr, i * ar + j]
                        )
    u, s, vh = np.linalg.svd(m, False)
    k1, disc1 = _select_rank(s, max_bond, cutoff)
    a2 = np.ascontiguousarray(u[:, :k1]).reshape(al, p, k1)
    rest = (s[:k1].reshape(k1, 1) * vh[:k1]).reshape(k1 * q, r * ar)
    u2, s2, vh2 = np.linalg.svd(rest, False)
    k2, disc2 = _select_rank(s2, max_bond, cutoff)
    b2 = np.ascontiguousarray(u2[:, :k2]).reshape(k1, q, k2)
    c2 = (s2[:k2].reshape(k2, 1) * vh2[:k2]).reshape(k2, r, ar)
    kmax = k1 if k1 > k2 else k2
    return a2, b2, c2, disc1 + disc2, kmax


@numba.njit(cache=True)
def shift_center_right(c, r):
    a, p, b = c.shape
    q, rm = np.linalg.qr(c.reshape(a * p, b))
    k = q.shape[1]
    left = np.ascontiguousarray(q).reshape(a, p, k)
    w, y = r.shape[1], r.shape[2]
    center = (rm @ r.reshape(b, w * y)).reshape(k, w, y)
    return left, center


@numba.njit(cache=True)
def shift_center_left(l, c):
    a, p, b = c.shape
    qt, rt = np.linalg.qr(np.ascontiguousarray(c.reshape(a, p * b).conj().T))
    k = qt.shape[1]
    right = np.ascontiguousarray(qt.conj().T).reshape(k, p, b)
    rm = np.ascontiguousarray(rt.conj().T)
    x, w = l.shape[0], l.shape[1]
    center = (l.reshape(x * w, a) @ rm).reshape(x, w, k)
    return center, right


@numba.njit(cache=True)
def _lindblad_rhs(rho, ham, jr, jrd, krd, jl, jld, kld):
    out = -1j * (ham @ rho - rho @ ham)
    out += jr @ rho @ jrd - 0.5 * (krd @ rho + rho @ krd)
    out += jl @ rho @ jld - 0.5 * (kld @ rho + rho @ kld)
    return out


@numba.njit(cache=True)
def lindblad_rk4(rho0, ham, jr, jl, projs, dt, n_steps, stride):
    jrd = np.ascontiguousarray(jr.conj().T)
    jld = np.ascontiguousarray(jl.conj().T)
    krd = jrd @ jr
    kld = jld @ jl
    n_rec = n_steps // stride + 1
    pops = np.empty((n_rec, 3))
    traces = np.empty(n_rec)
    rho = rho0.copy()
    rec = 0
    for step in range(n_steps + 1):
        if step % stride == 0:
            for i in range(3):
                pops[rec, i] = np.trace(rho @ projs[i]).real
            traces[rec] = np.trace(rho).real
            rec += 1
        if step == n_steps:
            break
        k1 = _lindblad_rhs(rho, ham, jr, jrd, krd, jl, jld, kld)
        k2 = _lindblad_rhs(rho + 0.5 * dt * k1, ham, jr, jrd, krd, jl, jld, kld)
        k3 = _lindblad_rhs(rho + 0.5 * dt * k2, ham, jr, jrd, krd, jl, jld, kld)
        k4 = _lindblad_rhs(rho + dt * k3, ham, jr, jrd, krd, jl, jld, kld)
        rho = rho + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return pops, traces
