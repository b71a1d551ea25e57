"""Time stepping, observable recording, steady-state detection.

One evolution step ``n``: materialize the two fresh bins next to the emitter
register, then for every sub-gate bring its two bins adjacent to the register
by nearest-neighbor swaps (relative bin order preserved), apply the gate,
measure bins that will never be touched again, and undo the swaps.  The chain
is back in canonical bin order with the center on the register after every
step.

Bins older than the maximal feedback offset are *finalized*: their occupation
is measured once, logged, and the site is never acted on again (it sits in the
left-isometric flank from then on, so it costs nothing).
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import RunAbortedError
from .model import (
    MARKOVIAN,
    NON_MARKOVIAN,
    SECOND_ORDER,
    boson_number,
    build_emitter_algebra,
    build_step_gates,
)
from .mps_engine import (
    LEFT_BIN,
    RIGHT_BIN,
    SYSTEM,
    GateApplicationReport,
    SiteLabel,
    TimeBinMPS,
    bin_sort_key,
    init_vacuum,
)


@dataclass
class Trajectory:
    """Recorded time series of one run."""

    mode: str
    dt: float
    gamma_ref: float
    m1: int
    m3: int
    steps: list = field(default_factory=list)
    pops: list = field(default_factory=list)
    norms: list = field(default_factory=list)
    total_excitation: list = field(default_factory=list)
    discarded_cum: list = field(default_factory=list)
    max_bond: list = field(default_factory=list)
    # one entry per finalized bin: (bin index, channel, occupation, step finalized)
    finalized: list = field(default_factory=list)

    @property
    def t_gamma(self):
        return [self.gamma_ref * n * self.dt for n in self.steps]

    def pops_array(self):
        return np.asarray(self.pops, dtype=float)


@dataclass
class SteadyStateVerdict:
    reached: bool
    at_step: int
    residual: float


def _current_step(mps):
    """Next step index, inferred from the newest materialized bin."""
    newest = -1
    for label in mps.labels:
        if label.kind != SYSTEM and label.index > newest:
            newest = label.index
    return newest + 1


def _drag(mps, frm, to, max_bond, cutoff):
    """Move the site at ``frm`` to ``to`` by adjacent swaps, center riding along."""
    if frm == to:
        return
    mps.move_center(frm)
    if frm < to:
        for q in range(frm, to):
            mps.swap_adjacent(q, max_bond, cutoff)
    else:
        for q in range(frm - 1, to - 1, -1):
            mps.swap_adjacent(q, max_bond, cutoff)


def _apply_subgate(mps, sub, n, max_bond, cutoff, swap_cutoff, measure_after, number_op):
    """Place the sub-gate's two bins next to the register, apply, restore.

    ``measure_after`` holds bin labels whose occupation must be read out
    right after this application (their last interaction), while they are
    still adjacent.  Returns {label: occupation}.
    """
    rlbl = SiteLabel(RIGHT_BIN, n - sub.r_offset)
    llbl = SiteLabel(LEFT_BIN, n - sub.l_offset)
    early, late = sorted((rlbl, llbl), key=bin_sort_key)

    late_orig = mps.position(late)
    _drag(mps, late_orig, mps.system_pos - 1, max_bond, swap_cutoff)
    early_orig = mps.position(early)
    _drag(mps, early_orig, mps.system_pos - 2, max_bond, swap_cutoff)

    spos = mps.system_pos
    report = mps.apply_gate(
        [spos - 2, spos - 1, spos],
        sub.site_unitary,
        max_bond=max_bond,
        cutoff=cutoff,
        center_end=spos,
    )
    occs = {}
    for lbl in measure_after:
        occs[lbl] = mps.expect_local(lbl, number_op).real

    _drag(mps, mps.position(early), early_orig, max_bond, swap_cutoff)
    _drag(mps, mps.position(late), late_orig, max_bond, swap_cutoff)
    return report, occs


def _step(mps, gates, max_bond, cutoff, swap_cutoff=None):
    """Advance one step; returns (aggregate report, finalized-bin occupations)."""
    if swap_cutoff is None:
        swap_cutoff = cutoff
    n = _current_step(mps)
    number_op = boson_number(gates.p)

    # Fresh bins enter at the right end (bond dimension 1, so the product
    # insertion is free); the register then swaps past them, which keeps its
    # site index advancing and leaves the chain in canonical bin order.
    end = mps.n_sites
    mps.insert_product_site(end, SiteLabel(LEFT_BIN, n), _vacuum_state(gates.p))
    mps.insert_product_site(end + 1, SiteLabel(RIGHT_BIN, n), _vacuum_state(gates.p))
    mps.move_center(mps.system_pos)
    mps.swap_adjacent(mps.system_pos)
    mps.swap_adjacent(mps.system_pos)

    horizon = gates.max_offset
    finalize = {SiteLabel(LEFT_BIN, n - horizon), SiteLabel(RIGHT_BIN, n - horizon)}
    last_touch = {}
    for i, sub in enumerate(gates.sub_gates):
        last_touch[SiteLabel(RIGHT_BIN, n - sub.r_offset)] = i
        last_touch[SiteLabel(LEFT_BIN, n - sub.l_offset)] = i

    disc = 0.0
    chi = 1
    occs = {}
    for i, sub in enumerate(gates.sub_gates):
        measure_now = [lbl for lbl in finalize if last_touch.get(lbl) == i]
        report, got = _apply_subgate(
            mps, sub, n, max_bond, cutoff, swap_cutoff, measure_now, number_op
        )
        disc += report.discarded_weight
        chi = max(chi, report.max_bond_after)
        occs.update(got)
    mps.move_center(mps.system_pos)
    return GateApplicationReport(disc, chi), occs


def _vacuum_state(p):
    v = np.zeros(p, dtype=np.complex128)
    v[0] = 1.0
    return v


def step_markovian(mps, gates, max_bond=0, cutoff=0.0):
    """One delay-free step: one exact gate on the register and the fresh bin pair."""
    if gates.mode != MARKOVIAN:
        raise ValueError("step_markovian needs a delay-free gate set")
    return _step(mps, gates, max_bond, cutoff)


def step_non_markovian(mps, gates, params=None, max_bond=0, cutoff=0.0, swap_cutoff=None):
    """One delayed step: swap-in, gate, swap-out for every sub-gate in order."""
    if gates.mode != NON_MARKOVIAN:
        raise ValueError("step_non_markovian needs a delayed gate set")
    return _step(mps, gates, max_bond, cutoff, swap_cutoff)


class _Recorder:
    """Collects per-step observables and the finalized-bin ledger."""

    def __init__(self, traj, mps, gates):
        self.traj = traj
        self.mps = mps
        self.gates = gates
        self.algebra = build_emitter_algebra()
        self.number_op = boson_number(gates.p)
        self.frozen_sum = 0.0

    def log_finalized(self, occs, step):
        for lbl, occ in sorted(occs.items(), key=lambda kv: bin_sort_key(kv[0])):
            self.traj.finalized.append((lbl.index, lbl.kind, occ, step))
            self.frozen_sum += occ

    def record(self, n_steps):
        mps = self.mps
        mps.move_center(mps.system_pos)
        c = mps.tensors[mps.center]
        pops = tuple(
            float(np.einsum("apb,pq,aqb->", c.conj(), s22, c).real)
            for s22 in self.algebra.sigma22
        )
        norm = mps.norm()
        horizon = self.gates.max_offset
        active = 0.0
        for k in range(n_steps - horizon, n_steps):
            for kind in (LEFT_BIN, RIGHT_BIN):
                lbl = SiteLabel(kind, k)
                if mps.has_site(lbl):
                    active += mps.expect_local(lbl, self.number_op).real
        mps.move_center(mps.system_pos)
        traj = self.traj
        traj.steps.append(n_steps)
        traj.pops.append(pops)
        traj.norms.append(norm)
        traj.total_excitation.append(sum(pops) + self.frozen_sum + active)
        traj.discarded_cum.append(mps.discarded_total)
        traj.max_bond.append(mps.max_bond_dim())


def detect_steady_state(traj, tol, window):
    """Steady when populations drift < tol across the trailing window of steps
    and every bin finalized inside that window carries occupation < tol."""
    if not traj.steps:
        return SteadyStateVerdict(False, -1, math.inf)
    latest = traj.steps[-1]
    lo = latest - window
    if lo < 0 or traj.steps[0] > lo:
        return SteadyStateVerdict(False, latest, math.inf)
    pops = [p for s, p in zip(traj.steps, traj.pops) if s >= lo]
    arr = np.asarray(pops)
    residual = float((arr.max(axis=0) - arr.min(axis=0)).max())
    bins_quiet = all(
        occ < tol for (_, _, occ, step) in traj.finalized if step > lo
    )
    reached = residual < tol and bins_quiet
    return SteadyStateVerdict(reached, latest, residual)


def run(
    params,
    max_steps,
    record_every=1,
    steady_tol=1e-5,
    steady_window=None,
    max_bond=128,
    cutoff=1e-12,
    ordering=SECOND_ORDER,
    discard_budget=1e-5,
    swap_cutoff=None,
    gates=None,
):
    """Evolve until steady state or ``max_steps``; returns (Trajectory, verdict).

    ``steady_window`` is in steps and defaults to three feedback round trips
    (or one decay time in the delay-free case).  ``swap_cutoff`` (default: same
    as ``cutoff``) truncates the swap re-splits of the delayed protocol.  A
    cumulative discarded weight above ``discard_budget`` aborts the run.
    """
    if max_steps < 1:
        raise ValueError("max_steps must be at least 1")
    if gates is None:
        gates = build_step_gates(params, ordering)
    horizon = gates.max_offset
    gamma_ref = max(params.gamma) or 1.0
    if steady_window is None:
        steady_window = max(6 * horizon, math.ceil(1.0 / (gamma_ref * params.dt)), 10)
    elif horizon and steady_window < 2 * horizon:
        raise ValueError("steady_window must cover one feedback round trip")

    mps = init_vacuum(horizon, params.p, params.initial_system)
    traj = Trajectory(params.mode, params.dt, gamma_ref, params.m1, params.m3)
    recorder = _Recorder(traj, mps, gates)
    recorder.record(0)
    verdict = SteadyStateVerdict(False, 0, math.inf)
    n = 0
    while n < max_steps:
        _, occs = _step(mps, gates, max_bond, cutoff, swap_cutoff)
        n += 1
        recorder.log_finalized(occs, n)
        if mps.discarded_total > discard_budget:
            raise RunAbortedError(
                f"cumulative discarded weight {mps.discarded_total:.3e} exceeded "
                f"budget {discard_budget:.3e} at step {n}; raise max_bond or the budget"
            )
        if n % record_every == 0 or n == max_steps:
            recorder.record(n)
            verdict = detect_steady_state(traj, steady_tol, steady_window)
            if verdict.reached:
                break
    return traj, verdict


def integrated_reservoir(traj, params):
    """Total finalized-bin occupation outside the feedback loop region.

    Sums both channels over bin indices 0 .. N - f with N the final step and
    f = 2*(m1 + m3) (the loop region, excluded).
    """
    n_final = traj.steps[-1] if traj.steps else 0
    upper = n_final - 2 * (params.m1 + params.m3)
    return float(
        sum(occ for (k, _, occ, _) in traj.finalized if 0 <= k <= upper)
    )
