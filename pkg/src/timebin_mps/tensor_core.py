"""Dense complex tensor algebra: contraction, SVD splitting, generator exponentials.

Convention used throughout the package: a tensor is a C-contiguous complex128
``numpy.ndarray``.  The flat data layout is axis-major (row-major / C order),
i.e. the last axis varies fastest; all reshapes and the binary state dump rely
on this single convention.
"""

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .backends import _truncation
from .errors import DecompositionError

HERMITICITY_TOL = 1e-12


def as_tensor(a):
    """Coerce to a C-contiguous complex128 array with at least one axis."""
    t = np.ascontiguousarray(a, dtype=np.complex128)
    if t.ndim == 0:
        t = t.reshape(1)
    return t


def contract(a, b, axis_pairs):
    """Contract ``a`` with ``b`` over pairs of axes ``(axis_of_a, axis_of_b)``.

    Remaining axes of ``a`` precede remaining axes of ``b`` in the result, each
    group in its original order.  A fully contracted result comes back as a
    0-d array.
    """
    a = np.asarray(a)
    b = np.asarray(b)
    ax_a = [p[0] for p in axis_pairs]
    ax_b = [p[1] for p in axis_pairs]
    if len(set(ax_a)) != len(ax_a) or len(set(ax_b)) != len(ax_b):
        raise ValueError("repeated axis in contraction pairs")
    for i, j in axis_pairs:
        if a.shape[i] != b.shape[j]:
            raise ValueError(
                f"contraction extent mismatch: axis {i} of shape {a.shape} vs "
                f"axis {j} of shape {b.shape}"
            )
    return np.tensordot(a, b, axes=(ax_a, ax_b))


@dataclass
class SvdResult:
    """Truncated Schmidt decomposition of a tensor split into two groups of axes.

    ``left`` is a left isometry with the new bond as its last axis, ``right``
    a right isometry with the bond first.  ``discarded_weight`` is the summed
    squared dropped singular values relative to the total.
    """

    left: np.ndarray
    singular_values: np.ndarray
    right: np.ndarray
    discarded_weight: float


def svd_split(t, left_axes, max_bond=0, cutoff=0.0):
    """Split ``t`` across (left_axes | remaining axes) by a truncated SVD.

    Values are dropped when their squared relative Schmidt weight falls below
    ``cutoff`` or past the ``max_bond`` cap (0 = uncapped).  Up to the reported
    ``discarded_weight``, ``left * s @ right`` reconstructs ``t``.
    """
    t = np.asarray(t)
    left_axes = tuple(left_axes)
    if len(set(left_axes)) != len(left_axes):
        raise ValueError("repeated axis in left_axes")
    if not left_axes or len(left_axes) >= t.ndim:
        raise ValueError("left_axes must be a nonempty proper subset of the axes")
    right_axes = tuple(i for i in range(t.ndim) if i not in left_axes)
    lshape = tuple(t.shape[i] for i in left_axes)
    rshape = tuple(t.shape[i] for i in right_axes)
    m = t.transpose(left_axes + right_axes).reshape(
        int(np.prod(lshape)), int(np.prod(rshape))
    )
    try:
        u, s, vh = np.linalg.svd(m, full_matrices=False)
    except np.linalg.LinAlgError:
        try:
            u, s, vh = scipy.linalg.svd(m, full_matrices=False, lapack_driver="gesvd")
        except Exception as exc:  # pragma: no cover - numerically pathological
            raise DecompositionError(f"SVD failed on shape {m.shape}") from exc
    k, disc = _truncation.select_rank(s, max_bond, cutoff)
    left = np.ascontiguousarray(u[:, :k]).reshape(lshape + (k,))
    right = np.ascontiguousarray(vh[:k]).reshape((k,) + rshape)
    return SvdResult(left, s[:k].copy(), right, disc)


def exponentiate_generator(h, prefactor=1.0):
    """exp(-i * prefactor * h) for a Hermitian matrix ``h``, via eigendecomposition."""
    h = np.asarray(h, dtype=np.complex128)
    if h.ndim != 2 or h.shape[0] != h.shape[1]:
        raise ValueError(f"generator must be a square matrix, got shape {h.shape}")
    scale = max(1.0, np.abs(h).max())
    dev = np.abs(h - h.conj().T).max()
    if dev > HERMITICITY_TOL * scale:
        raise ValueError(f"generator is not Hermitian (max deviation {dev:.3e})")
    h = 0.5 * (h + h.conj().T)
    w, v = np.linalg.eigh(h)
    phases = np.exp(-1j * prefactor * w)
    return (v * phases) @ v.conj().T


def permute_matrix_axes(m, dims, perm):
    """Reorder the tensor factors of a matrix acting on ``dims[0] x dims[1] x ...``.

    ``perm[i]`` names which original factor lands at position ``i``.  Used to
    re-target a gate built on one site ordering at a chain whose sites appear
    in another order.
    """
    dims = tuple(dims)
    n = len(dims)
    if sorted(perm) != list(range(n)):
        raise ValueError(f"invalid permutation {perm}")
    full = int(np.prod(dims))
    if m.shape != (full, full):
        raise ValueError(f"matrix shape {m.shape} does not match dims {dims}")
    t = m.reshape(dims + dims)
    axes = tuple(perm) + tuple(p + n for p in perm)
    return np.ascontiguousarray(t.transpose(axes)).reshape(full, full)
