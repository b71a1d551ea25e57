"""Pure-numpy implementations of the hot kernels.

Every function here has a numba twin in :mod:`numba_backend` with the same
signature and semantics; equivalence is pinned by tests.  Tensors are
complex128 and C-contiguous, site tensors carry axes (left bond, physical,
right bond).
"""

import numpy as np

from ._truncation import select_rank

NAME = "numpy"


def _svd(m):
    try:
        return np.linalg.svd(m, full_matrices=False)
    except np.linalg.LinAlgError:
        # gesdd occasionally fails to converge; gesvd is slower but sturdier.
        import scipy.linalg

        return scipy.linalg.svd(m, full_matrices=False, lapack_driver="gesvd")


def swap_pair(a, b, center_right, max_bond, cutoff):
    """Exchange two adjacent sites; the orthogonality center rides along.

    ``a`` (al, p, m) and ``b`` (m, q, ar) become (al, q, k) and (k, p, ar).
    Singular values are absorbed into the right factor when ``center_right``.
    With ``cutoff`` 0 and ``max_bond`` 0 only the numerical-rank floor
    discards anything.
    """
    al, p, _ = a.shape
    q, ar = b.shape[1], b.shape[2]
    theta = np.tensordot(a, b, axes=(2, 0))          # (al, p, q, ar)
    m = theta.transpose(0, 2, 1, 3).reshape(al * q, p * ar)
    u, s, vh = _svd(m)
    k, disc = select_rank(s, max_bond, cutoff)
    if center_right:
        a2 = np.ascontiguousarray(u[:, :k]).reshape(al, q, k)
        b2 = (s[:k, None] * vh[:k]).reshape(k, p, ar)
    else:
        a2 = (u[:, :k] * s[:k]).reshape(al, q, k)
        b2 = np.ascontiguousarray(vh[:k]).reshape(k, p, ar)
    return a2, b2, disc


def gate2(a, b, g, center_right, max_bond, cutoff):
    """Apply a two-site gate and re-split with truncation."""
    al, p, _ = a.shape
    q, ar = b.shape[1], b.shape[2]
    theta = np.tensordot(a, b, axes=(2, 0)).reshape(al, p * q, ar)
    theta = np.einsum("PQ,aQb->aPb", g, theta).reshape(al * p, q * ar)
    u, s, vh = _svd(theta)
    k, disc = select_rank(s, max_bond, cutoff)
    if center_right:
        a2 = np.ascontiguousarray(u[:, :k]).reshape(al, p, k)
        b2 = (s[:k, None] * vh[:k]).reshape(k, q, ar)
    else:
        a2 = (u[:, :k] * s[:k]).reshape(al, p, k)
        b2 = np.ascontiguousarray(vh[:k]).reshape(k, q, ar)
    return a2, b2, disc, k


def gate3_cr(a, b, c, g, max_bond, cutoff):
    """Apply a three-site gate, re-split, and leave the center on the right site."""
    al, p, _ = a.shape
    q = b.shape[1]
    r, ar = c.shape[1], c.shape[2]
    theta = np.tensordot(np.tensordot(a, b, axes=(2, 0)), c, axes=(3, 0))
    theta = theta.reshape(al, p * q * r, ar)
    theta = np.einsum("PQ,aQb->aPb", g, theta)
    m1 = theta.reshape(al * p, q * r * ar)
    u, s, vh = _svd(m1)
    k1, disc1 = select_rank(s, max_bond, cutoff)
    a2 = np.ascontiguousarray(u[:, :k1]).reshape(al, p, k1)
    rest = (s[:k1, None] * vh[:k1]).reshape(k1 * q, r * ar)
    u2, s2, vh2 = _svd(rest)
    k2, disc2 = select_rank(s2, max_bond, cutoff)
    b2 = np.ascontiguousarray(u2[:, :k2]).reshape(k1, q, k2)
    c2 = (s2[:k2, None] * vh2[:k2]).reshape(k2, r, ar)
    return a2, b2, c2, disc1 + disc2, max(k1, k2)


def shift_center_right(c, r):
    """QR-move the center one site right: returns (left isometry, new center)."""
    a, p, b = c.shape
    q, rm = np.linalg.qr(c.reshape(a * p, b))
    k = q.shape[1]
    left = np.ascontiguousarray(q).reshape(a, p, k)
    w, y = r.shape[1], r.shape[2]
    center = (rm @ r.reshape(b, w * y)).reshape(k, w, y)
    return left, center


def shift_center_left(l, c):
    """QR-move the center one site left: returns (new center, right isometry)."""
    a, p, b = c.shape
    qt, rt = np.linalg.qr(np.ascontiguousarray(c.reshape(a, p * b).conj().T))
    k = qt.shape[1]
    right = np.ascontiguousarray(qt.conj().T).reshape(k, p, b)
    rm = np.ascontiguousarray(rt.conj().T)                       # (a, k)
    x, w = l.shape[0], l.shape[1]
    center = (l.reshape(x * w, a) @ rm).reshape(x, w, k)
    return center, right


def lindblad_rk4(rho0, ham, jr, jl, projs, dt, n_steps, stride):
    """Fixed-step RK4 integration of a two-channel Lindblad equation.

    Records ``Tr(rho @ projs[i])`` every ``stride`` steps (including step 0
    and the final step); returns (populations, traces).
    """
    jrd = jr.conj().T
    jld = jl.conj().T
    krd = jrd @ jr
    kld = jld @ jl

    def rhs(rho):
        out = -1j * (ham @ rho - rho @ ham)
        out += jr @ rho @ jrd - 0.5 * (krd @ rho + rho @ krd)
        out += jl @ rho @ jld - 0.5 * (kld @ rho + rho @ kld)
        return out

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
        k1 = rhs(rho)
        k2 = rhs(rho + 0.5 * dt * k1)
        k3 = rhs(rho + 0.5 * dt * k2)
        k4 = rhs(rho + dt * k3)
        rho = rho + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return pops, traces
