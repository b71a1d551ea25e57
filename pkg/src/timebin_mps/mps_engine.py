"""Time-bin MPS: canonical form, center moves, swaps, gate application.

The chain holds one rank-3 tensor per site with axes (left bond, physical,
right bond).  Sites are labeled: the emitter register ("S", physical dimension
8) plus one site per time bin and channel ("L"/"R", physical dimension p).
Every site left of the orthogonality center is kept a left isometry, every
site right of it a right isometry, so local expectation values and the norm
contract against identity environments.

Bins enter the chain only when an evolution step first touches them: a vacuum
bin inserted at an interior bond of dimension chi is the identity-passthrough
tensor ``delta(chi) (x) |0>``, which is simultaneously a left and a right
isometry and therefore preserves the canonical form exactly.
"""

import struct
from dataclasses import dataclass

import numpy as np

from . import tensor_core
from .backends import active as _active_backend
from .backends import numpy_backend as _np_backend
from .errors import DecompositionError, ProtocolError

SYSTEM = "S"
LEFT_BIN = "L"
RIGHT_BIN = "R"


@dataclass(frozen=True, order=True)
class SiteLabel:
    """Identity of one chain site; ``index`` is the time-bin number (0 for S)."""

    kind: str
    index: int = 0

    def __str__(self):
        return self.kind if self.kind == SYSTEM else f"{self.kind}{self.index}"


def bin_sort_key(label):
    """Canonical bin ordering: ascending index, left bin before right bin."""
    return (label.index, 0 if label.kind == LEFT_BIN else 1)


@dataclass
class GateApplicationReport:
    discarded_weight: float
    max_bond_after: int


def _kernels(name, *args):
    # numba surfaces LAPACK non-convergence as ValueError; retry such calls on
    # the numpy backend, which falls through to the sturdier gesvd driver.
    backend = _active_backend()
    try:
        return getattr(backend, name)(*args)
    except (np.linalg.LinAlgError, ValueError):
        if backend is _np_backend:
            raise
        return getattr(_np_backend, name)(*args)


class TimeBinMPS:
    """Mutable single-owner MPS over the emitter register and its time bins."""

    def __init__(self, labels, tensors, center, discarded_total=0.0):
        self.labels = list(labels)
        self.tensors = [np.ascontiguousarray(t, dtype=np.complex128) for t in tensors]
        self.center = center
        self.discarded_total = discarded_total
        self._pos = {label: i for i, label in enumerate(self.labels)}
        if len(self._pos) != len(self.labels):
            raise ValueError("duplicate site labels")

    # ------------------------------------------------------------------ #
    # bookkeeping                                                         #
    # ------------------------------------------------------------------ #

    @property
    def n_sites(self):
        return len(self.tensors)

    @property
    def system_pos(self):
        return self._pos[SiteLabel(SYSTEM)]

    def position(self, label):
        return self._pos[label]

    def has_site(self, label):
        return label in self._pos

    def phys_dim(self, pos):
        return self.tensors[pos].shape[1]

    def bond_dims(self):
        return [t.shape[2] for t in self.tensors[:-1]]

    def max_bond_dim(self):
        return max((t.shape[2] for t in self.tensors[:-1]), default=1)

    def copy(self):
        return TimeBinMPS(
            self.labels,
            [t.copy() for t in self.tensors],
            self.center,
            self.discarded_total,
        )

    def norm(self):
        """Global norm, read off the center tensor alone."""
        return float(np.linalg.norm(self.tensors[self.center]))

    # ------------------------------------------------------------------ #
    # gauge moves and swaps                                               #
    # ------------------------------------------------------------------ #

    def move_center(self, target):
        """Shift the orthogonality center to ``target`` by exact QR steps."""
        if not 0 <= target < self.n_sites:
            raise IndexError(f"center target {target} outside chain")
        while self.center < target:
            left, center = _kernels(
                "shift_center_right",
                self.tensors[self.center],
                self.tensors[self.center + 1],
            )
            self.tensors[self.center] = left
            self.tensors[self.center + 1] = center
            self.center += 1
        while self.center > target:
            center, right = _kernels(
                "shift_center_left",
                self.tensors[self.center - 1],
                self.tensors[self.center],
            )
            self.tensors[self.center - 1] = center
            self.tensors[self.center] = right
            self.center -= 1

    def swap_adjacent(self, left_position, max_bond=0, cutoff=0.0):
        """Exchange sites ``left_position`` and ``left_position + 1``.

        The center must sit on one of the two sites; it travels with its
        tensor.  By default the split is exact up to the numerical-rank
        floor; a ``max_bond`` cap and a Schmidt-weight ``cutoff`` are
        available (the evolution protocol uses the latter, since repeated
        exact swaps let arbitrarily small genuine weights pile up in bonds no
        gate ever truncates).
        """
        i = left_position
        if self.center not in (i, i + 1):
            raise ProtocolError(
                f"swap at {i} requires the center on the pair, center={self.center}"
            )
        center_right = self.center == i
        a2, b2, disc = _kernels(
            "swap_pair",
            self.tensors[i],
            self.tensors[i + 1],
            center_right,
            max_bond,
            cutoff,
        )
        self.tensors[i] = a2
        self.tensors[i + 1] = b2
        la, lb = self.labels[i], self.labels[i + 1]
        self.labels[i], self.labels[i + 1] = lb, la
        self._pos[lb], self._pos[la] = i, i + 1
        self.center = i + 1 if center_right else i
        self.discarded_total += disc
        return disc

    def insert_product_site(self, position, label, phys_state):
        """Insert a fresh product-state site at ``position`` (exact).

        The new tensor is ``delta(chi) (x) phys_state`` with ``chi`` the bond
        dimension at the insertion bond, so the canonical form is untouched.
        """
        if label in self._pos:
            raise ProtocolError(f"site {label} already materialized")
        if position == 0:
            chi = self.tensors[0].shape[0] if self.tensors else 1
        else:
            chi = self.tensors[position - 1].shape[2]
        phys_state = np.asarray(phys_state, dtype=np.complex128)
        tensor = np.zeros((chi, phys_state.shape[0], chi), dtype=np.complex128)
        for c in range(chi):
            tensor[c, :, c] = phys_state
        self.labels.insert(position, label)
        self.tensors.insert(position, tensor)
        for lab, pos in self._pos.items():
            if pos >= position:
                self._pos[lab] = pos + 1
        self._pos[label] = position
        if self.center >= position:
            self.center += 1

    # ------------------------------------------------------------------ #
    # gates                                                               #
    # ------------------------------------------------------------------ #

    def apply_gate(self, positions, gate, max_bond=0, cutoff=0.0, center_end=None):
        """Apply a unitary on a contiguous ascending run of sites and re-split.

        ``gate`` is a matrix on the joint physical space of the run, factor
        order matching the site order.  The center ends at ``center_end``
        (default: last site of the run).
        """
        positions = list(positions)
        if positions != list(range(positions[0], positions[0] + len(positions))):
            raise ValueError(f"gate run must be contiguous ascending, got {positions}")
        if len(positions) < 2:
            raise ValueError("gate runs span at least two sites")
        dims = tuple(self.phys_dim(p) for p in positions)
        joint = int(np.prod(dims))
        if gate.shape != (joint, joint):
            raise ValueError(
                f"gate shape {gate.shape} does not match run dimensions {dims}"
            )
        if center_end is None:
            center_end = positions[-1]
        if center_end not in positions:
            raise ValueError("center_end must lie inside the run")
        if not positions[0] <= self.center <= positions[-1]:
            nearest = min(max(self.center, positions[0]), positions[-1])
            self.move_center(nearest)

        first = positions[0]
        if len(positions) == 2 and center_end in (positions[0], positions[-1]):
            a2, b2, disc, chi = _kernels(
                "gate2",
                self.tensors[first],
                self.tensors[first + 1],
                gate,
                center_end == positions[-1],
                max_bond,
                cutoff,
            )
            self.tensors[first] = a2
            self.tensors[first + 1] = b2
        elif len(positions) == 3 and center_end == positions[-1]:
            a2, b2, c2, disc, chi = _kernels(
                "gate3_cr",
                self.tensors[first],
                self.tensors[first + 1],
                self.tensors[first + 2],
                gate,
                max_bond,
                cutoff,
            )
            self.tensors[first] = a2
            self.tensors[first + 1] = b2
            self.tensors[first + 2] = c2
        else:
            disc, chi = self._apply_gate_generic(
                positions, gate, dims, max_bond, cutoff, center_end
            )
        self.center = center_end
        self.discarded_total += disc
        return GateApplicationReport(disc, chi)

    def _apply_gate_generic(self, positions, gate, dims, max_bond, cutoff, center_end):
        """Reference path: contract the whole run, hit it with the gate, re-split."""
        theta = self.tensors[positions[0]]
        for pos in positions[1:]:
            theta = np.tensordot(theta, self.tensors[pos], axes=(theta.ndim - 1, 0))
        bl, br = theta.shape[0], theta.shape[-1]
        theta = theta.reshape(bl, int(np.prod(dims)), br)
        theta = np.einsum("PQ,aQb->aPb", gate, theta).reshape((bl,) + dims + (br,))

        disc = 0.0
        chi = 1
        # split left isometries up to the target center, then right isometries
        for offset, pos in enumerate(positions[:-1]):
            if pos >= center_end:
                break
            res = tensor_core.svd_split(theta, (0, 1), max_bond, cutoff)
            disc += res.discarded_weight
            chi = max(chi, len(res.singular_values))
            self.tensors[pos] = res.left
            theta = res.singular_values[:, None] * res.right.reshape(
                len(res.singular_values), -1
            )
            theta = theta.reshape((len(res.singular_values),) + dims[offset + 1 :] + (br,))
        for back, pos in enumerate(reversed(positions)):
            if pos <= center_end:
                break
            res = tensor_core.svd_split(
                theta, tuple(range(theta.ndim - 2)), max_bond, cutoff
            )
            disc += res.discarded_weight
            chi = max(chi, len(res.singular_values))
            self.tensors[pos] = res.right
            theta = res.left * res.singular_values
        self.tensors[center_end] = theta
        return disc, chi

    # ------------------------------------------------------------------ #
    # observables                                                         #
    # ------------------------------------------------------------------ #

    def expect_local(self, site, op):
        """<psi| op at site |psi> via center-gauge contraction."""
        pos = self._pos[site] if isinstance(site, SiteLabel) else site
        op = np.asarray(op, dtype=np.complex128)
        d = self.phys_dim(pos)
        if op.shape != (d, d):
            raise ValueError(f"operator shape {op.shape} does not match site dim {d}")
        self.move_center(pos)
        c = self.tensors[pos]
        return complex(np.einsum("apb,pq,aqb->", c.conj(), op, c))

    def expect_sites(self, pairs):
        """Expectation values for several (site, op) pairs in one center sweep."""
        order = sorted(
            range(len(pairs)),
            key=lambda idx: self._pos[pairs[idx][0]]
            if isinstance(pairs[idx][0], SiteLabel)
            else pairs[idx][0],
        )
        out = [0j] * len(pairs)
        for idx in order:
            out[idx] = self.expect_local(*pairs[idx])
        return out

    def to_dense(self, max_elements=20_000_000):
        """Contract the full chain into one dense tensor (desk scale only)."""
        total = 8 * int(np.prod([self.phys_dim(i) for i in range(self.n_sites)])) // 8
        if total > max_elements:
            raise MemoryError(f"dense reconstruction would hold {total} amplitudes")
        psi = self.tensors[0]
        for t in self.tensors[1:]:
            psi = np.tensordot(psi, t, axes=(psi.ndim - 1, 0))
        return np.ascontiguousarray(psi[0, ..., 0])

    def canonical_defect(self):
        """Worst isometry violation across the flanks (0 for perfect gauge)."""
        worst = 0.0
        for i, t in enumerate(self.tensors):
            a, p, b = t.shape
            if i < self.center:
                m = t.reshape(a * p, b)
                dev = np.abs(m.conj().T @ m - np.eye(b)).max()
            elif i > self.center:
                m = t.reshape(a, p * b)
                dev = np.abs(m @ m.conj().T - np.eye(a)).max()
            else:
                continue
            worst = max(worst, float(dev))
        return worst

    # ------------------------------------------------------------------ #
    # persistence                                                         #
    # ------------------------------------------------------------------ #

    MAGIC = b"TBMPS\x01"
    _KIND_CODE = {SYSTEM: 0, LEFT_BIN: 1, RIGHT_BIN: 2}
    _KIND_NAME = {0: SYSTEM, 1: LEFT_BIN, 2: RIGHT_BIN}

    def save(self, path):
        """Binary dump: magic, center, discarded total, per-site header + raw data.

        Layout (little endian): magic ``TBMPS\\x01``; uint32 site count; int64
        center; float64 discarded total; per site a header (uint8 kind, int64
        bin index, 3x uint64 shape) followed immediately by the tensor's
        complex128 data in C order.
        """
        with open(path, "wb") as fh:
            fh.write(self.MAGIC)
            fh.write(struct.pack("<Iqd", self.n_sites, self.center, self.discarded_total))
            for label, tensor in zip(self.labels, self.tensors):
                fh.write(
                    struct.pack(
                        "<Bq3Q", self._KIND_CODE[label.kind], label.index, *tensor.shape
                    )
                )
                fh.write(np.ascontiguousarray(tensor).tobytes())

    @classmethod
    def load(cls, path):
        with open(path, "rb") as fh:
            magic = fh.read(len(cls.MAGIC))
            if magic != cls.MAGIC:
                raise ValueError(f"not a state dump (bad magic {magic!r})")
            n_sites, center, disc = struct.unpack("<Iqd", fh.read(struct.calcsize("<Iqd")))
            labels = []
            tensors = []
            head_fmt = "<Bq3Q"
            head_size = struct.calcsize(head_fmt)
            for _ in range(n_sites):
                kind, index, *shape = struct.unpack(head_fmt, fh.read(head_size))
                count = int(np.prod(shape))
                data = np.frombuffer(fh.read(count * 16), dtype=np.complex128)
                labels.append(SiteLabel(cls._KIND_NAME[kind], index))
                tensors.append(data.reshape(shape).copy())
        return cls(labels, tensors, center, disc)


def init_vacuum(past_bins, p, system_amplitudes):
    """Product-state MPS: ``past_bins`` vacuum bins per channel, then the system.

    Bin indices run from ``-past_bins`` to ``-1`` (the field present before the
    first step); future bins are not stored until an evolution step touches
    them.  The center starts on the system site.
    """
    if p < 2:
        raise ValueError("bin dimension p must be at least 2")
    amps = np.asarray(system_amplitudes, dtype=np.complex128).reshape(-1)
    if amps.shape != (8,):
        raise ValueError("system_amplitudes must hold 8 amplitudes")
    if abs(np.linalg.norm(amps) - 1.0) > 1e-12:
        raise ValueError("system amplitudes must be normalized")
    vac = np.zeros(p, dtype=np.complex128)
    vac[0] = 1.0
    labels = []
    tensors = []
    for k in range(-past_bins, 0):
        labels.append(SiteLabel(LEFT_BIN, k))
        tensors.append(vac.reshape(1, p, 1).copy())
        labels.append(SiteLabel(RIGHT_BIN, k))
        tensors.append(vac.reshape(1, p, 1).copy())
    labels.append(SiteLabel(SYSTEM))
    tensors.append(amps.reshape(1, 8, 1).copy())
    return TimeBinMPS(labels, tensors, center=len(labels) - 1)
