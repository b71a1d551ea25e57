"""Independent verification engines.

Two oracles with deliberately different failure modes:

* :func:`brute_force_run` applies the *identical* per-step gate sequence to a
  dense state vector over the emitter register and every touched bin, with no
  chain, no swaps and no SVDs.  Any disagreement with the MPS run isolates
  tensor-network bookkeeping bugs.
* :func:`lindblad_run` integrates the delay-free master equation with the
  collective jump operators, re-deriving the physics without time bins.  It
  checks the coupling normalization and the collision-model error instead.
"""

from dataclasses import dataclass

import numpy as np

from .backends import active as _active_backend
from .errors import IntegratorError
from .evolution import Trajectory
from .model import (
    MARKOVIAN,
    SECOND_ORDER,
    build_emitter_algebra,
    build_step_gates,
    detuning_hamiltonian,
    markovian_jump_operators,
)
from .mps_engine import LEFT_BIN, RIGHT_BIN, SYSTEM, SiteLabel

DEFAULT_MEMORY_BOUND = 1_500_000_000  # bytes of state-vector storage


class FullState:
    """Dense state over the register and lazily materialized bins.

    Axis 0 is the 8-dim register; each touched bin owns one later axis.  The
    axis order is materialization order, which mirrors the chain's bins; gates
    address axes by bin label, so the order never matters physically.
    """

    def __init__(self, system_amplitudes, p, memory_bound=DEFAULT_MEMORY_BOUND):
        self.p = p
        self.memory_bound = memory_bound
        self.psi = np.asarray(system_amplitudes, dtype=np.complex128).reshape(8)
        self.axes = {SiteLabel(SYSTEM): 0}

    def _ensure_bin(self, label):
        if label in self.axes:
            return
        new_bytes = self.psi.nbytes * self.p
        if new_bytes > self.memory_bound:
            raise MemoryError(
                f"dense state would need {new_bytes / 1e9:.2f} GB for {label}, "
                f"bound is {self.memory_bound / 1e9:.2f} GB"
            )
        vac = np.zeros(self.p, dtype=np.complex128)
        vac[0] = 1.0
        self.psi = self.psi[..., None] * vac
        self.axes[label] = self.psi.ndim - 1

    def apply_subgate(self, sub, n):
        rlbl = SiteLabel(RIGHT_BIN, n - sub.r_offset)
        llbl = SiteLabel(LEFT_BIN, n - sub.l_offset)
        self._ensure_bin(rlbl)
        self._ensure_bin(llbl)
        p = self.p
        targets = (0, self.axes[rlbl], self.axes[llbl])
        g = sub.unitary.reshape(8, p, p, 8, p, p)
        out = np.tensordot(g, self.psi, axes=((3, 4, 5), targets))
        # tensordot put (register, r bin, l bin) in front; restore axis order
        rest = [i for i in range(self.psi.ndim) if i not in targets]
        perm = [0] * self.psi.ndim
        for spot, orig in enumerate(targets):
            perm[orig] = spot
        for spot, orig in enumerate(rest):
            perm[orig] = 3 + spot
        self.psi = np.ascontiguousarray(out.transpose(perm))

    def norm(self):
        return float(np.linalg.norm(self.psi))

    def _axis_weights(self, axis):
        w = np.abs(self.psi) ** 2
        other = tuple(i for i in range(w.ndim) if i != axis)
        return w.sum(axis=other)

    def populations(self):
        algebra = build_emitter_algebra()
        w = self._axis_weights(0)
        return tuple(float(w @ np.real(np.diag(s))) for s in algebra.sigma22)

    def bin_occupation(self, label):
        w = self._axis_weights(self.axes[label])
        return float(w @ np.arange(self.p))

    def total_excitation(self):
        total = sum(self.populations())
        levels = np.arange(self.p, dtype=float)
        for label, axis in self.axes.items():
            if label.kind != SYSTEM:
                total += float(self._axis_weights(axis) @ levels)
        return total


def _touched_axes(gates, n_steps):
    """Distinct bins the first ``n_steps`` steps will touch."""
    r_offsets = {g.r_offset for g in gates.sub_gates}
    l_offsets = {g.l_offset for g in gates.sub_gates}
    return 2 * n_steps + max(r_offsets) + max(l_offsets)


def brute_force_run(
    params, n_steps, ordering=SECOND_ORDER, memory_bound=DEFAULT_MEMORY_BOUND, gates=None
):
    """Dense evolution with the same StepGateSet; returns a Trajectory.

    Refuses up front when the final state vector would exceed the memory
    bound.  Norm is exactly preserved here (no truncation exists), so any
    MPS/brute-force disagreement isolates chain bookkeeping, not physics.
    """
    if gates is None:
        gates = build_step_gates(params, ordering)
    need = 8 * params.p ** _touched_axes(gates, n_steps) * 16
    if need > memory_bound:
        raise MemoryError(
            f"{n_steps} dense steps need {need / 1e9:.2f} GB "
            f"({_touched_axes(gates, n_steps)} bin axes); bound is "
            f"{memory_bound / 1e9:.2f} GB"
        )
    state = FullState(params.initial_system, params.p, memory_bound)
    gamma_ref = max(params.gamma) or 1.0
    traj = Trajectory(params.mode, params.dt, gamma_ref, params.m1, params.m3)

    def record(n):
        traj.steps.append(n)
        traj.pops.append(state.populations())
        traj.norms.append(state.norm())
        traj.total_excitation.append(state.total_excitation())
        traj.discarded_cum.append(0.0)
        traj.max_bond.append(0)

    record(0)
    for n in range(n_steps):
        for sub in gates.sub_gates:
            state.apply_subgate(sub, n)
        record(n + 1)
    for label in sorted(state.axes, key=lambda l: (l.index, l.kind)):
        if label.kind != SYSTEM:
            traj.finalized.append(
                (label.index, label.kind, state.bin_occupation(label), n_steps)
            )
    return traj


@dataclass
class LindbladResult:
    times: np.ndarray
    pops: np.ndarray
    trace_drift: float


def validate_density_matrix(rho, tol=1e-12):
    rho = np.asarray(rho, dtype=np.complex128)
    if rho.shape != (8, 8):
        raise ValueError("density matrix must be 8x8")
    if np.abs(rho - rho.conj().T).max() > tol:
        raise ValueError("density matrix must be Hermitian")
    if abs(np.trace(rho).real - 1.0) > tol:
        raise ValueError("density matrix must have unit trace")
    if np.linalg.eigvalsh(rho).min() < -1e-10:
        raise ValueError("density matrix must be positive semidefinite")
    return rho


def lindblad_run(params, t_end, dt_ode, rho0=None, record_stride=1):
    """Fixed-step RK4 integration of the delay-free master equation.

    d(rho)/dt = -i[H, rho] + sum over both channels of
    J rho Jdag - (1/2){Jdag J, rho}, with the collective jump operators and
    the rotating-frame detuning Hamiltonian.  Raises when the trace drifts
    beyond 1e-8.
    """
    if params.mode != MARKOVIAN:
        raise ValueError("the master-equation oracle applies to the delay-free mode")
    if rho0 is None:
        psi = params.initial_system
        rho0 = np.outer(psi, psi.conj())
    rho0 = validate_density_matrix(rho0)
    j_r, j_l = markovian_jump_operators(params)
    ham = detuning_hamiltonian(params)
    algebra = build_emitter_algebra()
    projs = np.stack([s.astype(np.complex128) for s in algebra.sigma22])
    n_steps = int(round(t_end / dt_ode))
    n_steps = max(n_steps - n_steps % record_stride, record_stride)
    pops, traces = _active_backend().lindblad_rk4(
        np.ascontiguousarray(rho0),
        np.ascontiguousarray(ham),
        np.ascontiguousarray(j_r),
        np.ascontiguousarray(j_l),
        projs,
        dt_ode,
        n_steps,
        record_stride,
    )
    drift = float(np.abs(traces - 1.0).max())
    if drift > 1e-8:
        raise IntegratorError(
            f"master-equation trace drifted by {drift:.3e}; reduce dt_ode"
        )
    times = np.arange(pops.shape[0]) * (dt_ode * record_stride)
    return LindbladResult(times, pops, drift)


@dataclass
class CompareReport:
    diffs: dict
    tolerance: float
    passed: bool

    def worst(self):
        return max(self.diffs.values()) if self.diffs else 0.0


def compare(mps_traj, oracle_result, tolerance, interpolate=False):
    """Max per-observable deviation between an MPS run and an oracle run."""
    diffs = {}
    if isinstance(oracle_result, LindbladResult):
        if not interpolate:
            raise ValueError(
                "master-equation results live on their own time grid; "
                "enable interpolation to compare"
            )
        t_mps = np.asarray(mps_traj.t_gamma) / mps_traj.gamma_ref
        mps_pops = mps_traj.pops_array()
        for i in range(3):
            ref = np.interp(t_mps, oracle_result.times, oracle_result.pops[:, i])
            diffs[f"pop{i + 1}"] = float(np.abs(mps_pops[:, i] - ref).max())
    else:
        if list(mps_traj.steps) != list(oracle_result.steps):
            raise ValueError("step grids differ; trajectories must share a grid")
        a = mps_traj.pops_array()
        b = oracle_result.pops_array()
        for i in range(3):
            diffs[f"pop{i + 1}"] = float(np.abs(a[:, i] - b[:, i]).max())
        diffs["norm"] = float(
            np.abs(np.asarray(mps_traj.norms) - np.asarray(oracle_result.norms)).max()
        )
        diffs["total_excitation"] = float(
            np.abs(
                np.asarray(mps_traj.total_excitation)
                - np.asarray(oracle_result.total_excitation)
            ).max()
        )
    passed = all(v <= tolerance for v in diffs.values())
    return CompareReport(diffs, tolerance, passed)
