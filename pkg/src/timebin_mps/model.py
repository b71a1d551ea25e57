"""Physical model: collective emitter basis, per-step generators, gate sets.

Three two-level emitters couple to the right- and left-moving channels of a
waveguide.  Working in the rotating frame referenced to the middle emitter,
one evolution step of duration ``dt`` is generated by one Hermitian coupling
block per emitter,

    K_i = sqrt(gamma_i * dt) * sigma12_i (x) [phase_R * bdag_R + phase_L * bdag_L] + h.c.
          + dt * delta_i * sigma22_i,

acting on the 8-dim emitter space and one time bin per channel.  Which bins
those are is a pure bookkeeping question: emitter 1 talks to the current
right-moving bin and the left-moving bin from ``m1 + m3`` steps ago, emitter 3
mirrors it, and the middle emitter sits at offsets ``(m1, m3)``.  The
delay-free mode keeps only the coupling phases and sets every offset to zero,
which collapses all three blocks onto the same bin pair; blocks sharing a bin
pair are summed and exponentiated together, so the zero-delay limit is exactly
the delay-free gate.
"""

from dataclasses import dataclass, field

import numpy as np

from .tensor_core import exponentiate_generator, permute_matrix_axes

SYSTEM_DIM = 8
MARKOVIAN = "markovian"
NON_MARKOVIAN = "non-markovian"

_EMITTER_BITS = {1: 4, 2: 2, 3: 1}


@dataclass
class EmitterAlgebra:
    """Flip and projection operators in the collective 8-level basis.

    Basis: ``|ijk>`` maps to index ``(i-1)*4 + (j-1)*2 + (k-1)`` with i, j, k
    the states of emitters 1, 2, 3 (1 = ground, 2 = excited).
    """

    sigma12: tuple
    sigma22: tuple
    excitation_number: np.ndarray


def build_emitter_algebra():
    sigma12 = []
    sigma22 = []
    for emitter in (1, 2, 3):
        bit = _EMITTER_BITS[emitter]
        low = np.zeros((SYSTEM_DIM, SYSTEM_DIM), dtype=np.complex128)
        for n in range(SYSTEM_DIM):
            if n & bit:
                low[n - bit, n] = 1.0
        sigma12.append(low)
        sigma22.append(low.conj().T @ low)
    number = sigma22[0] + sigma22[1] + sigma22[2]
    return EmitterAlgebra(tuple(sigma12), tuple(sigma22), number)


def boson_lowering(p):
    """Truncated annihilation operator on ``p`` levels."""
    b = np.zeros((p, p), dtype=np.complex128)
    for k in range(1, p):
        b[k - 1, k] = np.sqrt(k)
    return b


def boson_number(p):
    return np.diag(np.arange(p, dtype=np.complex128))


def joint_number_operator(p):
    """Total excitation (emitters + both bins) on the 8*p*p gate space."""
    algebra = build_emitter_algebra()
    eye_p = np.eye(p, dtype=np.complex128)
    eye_s = np.eye(SYSTEM_DIM, dtype=np.complex128)
    n_b = boson_number(p)
    return (
        np.kron(np.kron(algebra.excitation_number, eye_p), eye_p)
        + np.kron(np.kron(eye_s, n_b), eye_p)
        + np.kron(np.kron(eye_s, eye_p), n_b)
    )


@dataclass
class ModelParams:
    """Physical configuration of a run.

    Rates carry inverse-time units and times are measured against them; the
    CLI works in units where the common decay rate is 1.  Delays enter as the
    integer bin offsets ``m1 = tau1/(2 dt)`` and ``m3 = tau3/(2 dt)``.  The
    phases ``phi_tau1 = omega0*tau1`` and ``phi_tau3 = omega0*tau3`` are
    independent inputs (only their values mod 2*pi matter physically).
    ``markovian_phases``, when given, replaces the delay-derived coupling
    phases by one explicit local phase per emitter, identical in both
    channels (delay-free mode only).
    """

    gamma: tuple = (1.0, 1.0, 1.0)
    delta1: float = 0.0
    delta3: float = 0.0
    m1: int = 0
    m3: int = 0
    dt: float = 0.05
    phi_tau1: float = 0.0
    phi_tau3: float = 0.0
    p: int = 3
    mode: str = MARKOVIAN
    initial_system: np.ndarray = field(default_factory=lambda: _basis_state(0))
    markovian_phases: tuple | None = None

    def __post_init__(self):
        self.gamma = tuple(float(g) for g in self.gamma)
        if len(self.gamma) != 3 or any(g < 0 for g in self.gamma):
            raise ValueError("gamma must be three non-negative rates")
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.p < 2:
            raise ValueError("bin dimension p must be at least 2")
        if self.mode not in (MARKOVIAN, NON_MARKOVIAN):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.m1 < 0 or self.m3 < 0:
            raise ValueError("delay offsets must be non-negative")
        if self.mode == NON_MARKOVIAN and self.m1 + self.m3 < 1:
            raise ValueError("non-Markovian mode needs m1 + m3 >= 1")
        if self.markovian_phases is not None:
            if self.mode != MARKOVIAN:
                raise ValueError("markovian_phases applies to the delay-free mode only")
            self.markovian_phases = tuple(float(x) for x in self.markovian_phases)
            if len(self.markovian_phases) != 3:
                raise ValueError("markovian_phases must hold three phases")
        state = np.asarray(self.initial_system, dtype=np.complex128).reshape(-1)
        if state.shape != (SYSTEM_DIM,):
            raise ValueError("initial_system must hold 8 amplitudes")
        if abs(np.linalg.norm(state) - 1.0) > 1e-12:
            raise ValueError("initial_system must be normalized")
        self.initial_system = state

    @property
    def loop_phase(self):
        """omega0 * tau with tau = (tau1 + tau3) / 2."""
        return 0.5 * (self.phi_tau1 + self.phi_tau3)

    def emitter_phases(self, emitter):
        """(right-channel, left-channel) coupling phases of one emitter."""
        if self.markovian_phases is not None:
            phi = self.markovian_phases[emitter - 1]
            return phi, phi
        if emitter == 1:
            return 0.0, self.loop_phase
        if emitter == 2:
            return 0.5 * self.phi_tau1, 0.5 * self.phi_tau3
        if emitter == 3:
            return self.loop_phase, 0.0
        raise ValueError(f"emitter id must be 1, 2 or 3, got {emitter}")

    def emitter_offsets(self, emitter):
        """(right-channel, left-channel) bin offsets, in steps."""
        if self.mode == MARKOVIAN:
            return 0, 0
        if emitter == 1:
            return 0, self.m1 + self.m3
        if emitter == 2:
            return self.m1, self.m3
        if emitter == 3:
            return self.m1 + self.m3, 0
        raise ValueError(f"emitter id must be 1, 2 or 3, got {emitter}")

    def detuning(self, emitter):
        return {1: self.delta1, 2: 0.0, 3: self.delta3}[emitter]


def _basis_state(index):
    v = np.zeros(SYSTEM_DIM, dtype=np.complex128)
    v[index] = 1.0
    return v


def coupling_generator(sigma, p, coeff_r, coeff_l, detuning=0.0):
    """Hermitian one-step generator on system (x) right bin (x) left bin.

    ``coeff_r`` / ``coeff_l`` are the complex amplitudes multiplying
    ``sigma (x) bdag`` in each channel (they already include sqrt(gamma*dt)
    and the coupling phase).
    """
    eye_p = np.eye(p, dtype=np.complex128)
    bdag = boson_lowering(p).conj().T
    term = np.kron(np.kron(sigma, coeff_r * bdag), eye_p)
    term += np.kron(np.kron(sigma, eye_p), coeff_l * bdag)
    k = term + term.conj().T
    if detuning:
        proj = sigma.conj().T @ sigma
        k += detuning * np.kron(np.kron(proj, eye_p), eye_p)
    return k


def build_step_generator(params, emitter):
    """One emitter's Hermitian step generator plus its bin-slot descriptor.

    Returns ``(K, (r_offset, l_offset))`` with ``K`` acting on
    system (x) right-slot bin (x) left-slot bin.  The sqrt(dt) in the coupling
    implements the unit-commutator quantum-noise increments of one time bin.
    """
    algebra = build_emitter_algebra()
    g = np.sqrt(params.gamma[emitter - 1] * params.dt)
    phi_r, phi_l = params.emitter_phases(emitter)
    k = coupling_generator(
        algebra.sigma12[emitter - 1],
        params.p,
        g * np.exp(1j * phi_r),
        g * np.exp(1j * phi_l),
        detuning=params.detuning(emitter) * params.dt,
    )
    return k, params.emitter_offsets(emitter)


@dataclass(frozen=True)
class SubGate:
    """One gate application within a step.

    ``unitary`` acts on system (x) right-slot bin (x) left-slot bin (in that
    factor order) and already includes the 1/2 of a symmetric half step where
    applicable.  ``site_unitary`` is the same gate with factors permuted to
    the chain layout (earlier bin, later bin, system), where the bin with the
    larger offset comes first and a left bin precedes a right bin of the same
    step.
    """

    emitters: tuple
    r_offset: int
    l_offset: int
    unitary: np.ndarray
    site_unitary: np.ndarray

    @property
    def l_first(self):
        return self.l_offset >= self.r_offset


@dataclass(frozen=True)
class StepGateSet:
    """Precomputed per-step unitaries; reused unchanged every step."""

    mode: str
    p: int
    ordering: str
    sub_gates: tuple
    generators: tuple  # (emitters, r_offset, l_offset, K) per slot group

    @property
    def max_offset(self):
        off = 0
        for gate in self.sub_gates:
            off = max(off, gate.r_offset, gate.l_offset)
        return off


FIRST_ORDER = "first-order"
SECOND_ORDER = "second-order"


def build_step_gates(params, ordering=SECOND_ORDER):
    """Group emitters by bin slots, exponentiate once, lay out the step sequence.

    Emitters whose two bin slots coincide are summed into a single generator
    before exponentiation (in particular the delay-free mode is one exact gate
    on the current bin pair).  Distinct slot groups act on disjoint bins and
    therefore commute exactly, so the first-order and symmetric orderings
    produce the same step operator; both layouts are kept for auditability.
    """
    if ordering not in (FIRST_ORDER, SECOND_ORDER):
        raise ValueError(f"unknown Trotter ordering {ordering!r}")
    groups = {}
    order = []
    for emitter in (1, 2, 3):
        k, slots = build_step_generator(params, emitter)
        if slots not in groups:
            groups[slots] = (k, [emitter])
            order.append(slots)
        else:
            groups[slots] = (groups[slots][0] + k, groups[slots][1] + [emitter])
    generators = tuple(
        (tuple(groups[slots][1]), slots[0], slots[1], groups[slots][0])
        for slots in order
    )

    def make(slots, prefactor):
        k, emitters = groups[slots]
        unitary = exponentiate_generator(k, prefactor)
        dims = (SYSTEM_DIM, params.p, params.p)
        perm = (2, 1, 0) if slots[1] >= slots[0] else (1, 2, 0)
        return SubGate(
            tuple(emitters),
            slots[0],
            slots[1],
            unitary,
            permute_matrix_axes(unitary, dims, perm),
        )

    if len(order) == 1 or ordering == FIRST_ORDER:
        sequence = [make(slots, 1.0) for slots in order]
    else:
        head = [make(slots, 0.5) for slots in order[:-1]]
        sequence = head + [make(order[-1], 1.0)] + head[::-1]
    return StepGateSet(params.mode, params.p, ordering, tuple(sequence), generators)


def markovian_jump_operators(params):
    """Collective jump operators (J_R, J_L) of the delay-free master equation.

    Delay-derived phases put (0, phi_tau1/2, loop) on the right channel and
    (loop, phi_tau3/2, 0) on the left; an explicit ``markovian_phases``
    triple overrides both channels with the same per-emitter phase.
    """
    algebra = build_emitter_algebra()
    if params.markovian_phases is not None:
        theta_r = params.markovian_phases
        theta_l = params.markovian_phases
    else:
        theta_r = (0.0, 0.5 * params.phi_tau1, params.loop_phase)
        theta_l = (params.loop_phase, 0.5 * params.phi_tau3, 0.0)
    j_r = np.zeros((SYSTEM_DIM, SYSTEM_DIM), dtype=np.complex128)
    j_l = np.zeros((SYSTEM_DIM, SYSTEM_DIM), dtype=np.complex128)
    for i in range(3):
        amp = np.sqrt(params.gamma[i])
        j_r += amp * np.exp(1j * theta_r[i]) * algebra.sigma12[i]
        j_l += amp * np.exp(1j * theta_l[i]) * algebra.sigma12[i]
    return j_r, j_l


def detuning_hamiltonian(params):
    """System Hamiltonian left over in the rotating frame (detunings only)."""
    algebra = build_emitter_algebra()
    return params.delta1 * algebra.sigma22[0] + params.delta3 * algebra.sigma22[2]


INITIAL_STATE_PRESETS = {
    "vacuum": lambda: _basis_state(0),
    "triply": lambda: _basis_state(7),
    "single-sym": lambda: (_basis_state(1) + _basis_state(2) + _basis_state(4))
    / np.sqrt(3.0),
    "double-sym": lambda: (_basis_state(3) + _basis_state(5) + _basis_state(6))
    / np.sqrt(3.0),
}


def initial_state(name):
    """Resolve a named initial-state preset to its amplitude vector."""
    try:
        return INITIAL_STATE_PRESETS[name]()
    except KeyError:
        raise ValueError(
            f"unknown initial-state preset {name!r}; "
            f"options: {sorted(INITIAL_STATE_PRESETS)}"
        ) from None
