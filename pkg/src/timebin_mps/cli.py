"""Command-line front end: config parsing, experiment drivers, CSV emission.

Units: rates are quoted in units of the reference decay rate (gamma = 1),
times in its inverse, phases in radians.  A run is configured from a flat
``key = value`` file plus command-line overrides; identical configurations
produce byte-identical CSV output.

Exit codes: 0 ok, 2 configuration error, 3 run aborted (truncation budget),
4 verification failure.
"""

import argparse
import concurrent.futures
import dataclasses
import json
import math
import sys
from dataclasses import dataclass

import numpy as np

from . import evolution, model, oracle
from .backends import backend_name
from .errors import ConfigError, RunAbortedError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_ABORTED = 3
EXIT_VERIFY = 4


@dataclass
class RunConfig:
    """Everything a run needs, in CLI units; resolves to ModelParams + options."""

    mode: str = "markovian"
    gamma1: float = 1.0
    gamma2: float = 1.0
    gamma3: float = 1.0
    tau1: float = 0.0
    tau3: float = 0.0
    m1: int | None = None
    m3: int | None = None
    dt: float | None = None
    phi_tau1: float = 0.0
    phi_tau3: float = 0.0
    phi1: float | None = None
    phi2: float | None = None
    phi3: float | None = None
    delta1: float = 0.0
    delta3: float = 0.0
    p: int = 3
    initial: str = "triply"
    t_end: float = 15.0
    max_steps: int | None = None
    record_every: int = 1
    steady_tol: float = 1e-5
    steady_window: int | None = None
    max_bond: int = 128
    cutoff: float = 1e-12
    trotter: str = model.SECOND_ORDER
    discard_budget: float = 1e-5
    output: str = "run"
    sweep_n1: int = 8
    sweep_n3: int = 8
    presets: str = "triply"
    oracle: str = "brute"
    oracle_steps: int = 6
    oracle_tol: float | None = None
    dt_ode: float = 1e-4
    workers: int = 1
    seed: int = 0  # reserved for future stochastic drivers; runs are deterministic

    _INT_FIELDS = frozenset(
        {
            "m1",
            "m3",
            "p",
            "max_steps",
            "record_every",
            "steady_window",
            "max_bond",
            "sweep_n1",
            "sweep_n3",
            "oracle_steps",
            "workers",
            "seed",
        }
    )
    _STR_FIELDS = frozenset({"mode", "initial", "trotter", "output", "presets", "oracle"})

    @classmethod
    def from_mapping(cls, mapping):
        cfg = cls()
        cfg.apply(mapping)
        return cfg

    def apply(self, mapping):
        known = {f.name for f in dataclasses.fields(self)}
        for raw_key, value in mapping.items():
            key = raw_key.strip().lower().replace("-", "_")
            if key == "gamma":
                for sub in ("gamma1", "gamma2", "gamma3"):
                    setattr(self, sub, float(value))
                continue
            if key not in known:
                raise ConfigError(f"unknown configuration key {raw_key!r}")
            if value is None:
                continue
            try:
                if key in self._STR_FIELDS:
                    setattr(self, key, str(value).strip())
                elif key in self._INT_FIELDS:
                    setattr(self, key, int(value))
                else:
                    setattr(self, key, float(value))
            except ValueError as exc:
                raise ConfigError(f"bad value for {raw_key}: {value!r}") from exc

    # ------------------------------------------------------------------ #
    # resolution                                                          #
    # ------------------------------------------------------------------ #

    @property
    def gamma(self):
        return (self.gamma1, self.gamma2, self.gamma3)

    @property
    def gamma_ref(self):
        return max(self.gamma) or 1.0

    def resolve_grid(self):
        """Pick (dt, m1, m3) so both half-delays are integer step counts.

        The requested dt is only ever adjusted downward; the adjustment is
        reported on the summary line.
        """
        if self.m1 is not None or self.m3 is not None:
            m1, m3 = int(self.m1 or 0), int(self.m3 or 0)
            dt = self.dt if self.dt else min(0.05 / self.gamma_ref, 0.05)
            return dt, m1, m3, False
        taus = [t for t in (self.tau1, self.tau3) if t > 0]
        dt_req = self.dt
        if dt_req is None:
            dt_req = min(0.05 / self.gamma_ref, min(taus) / 8) if taus else 0.05 / self.gamma_ref
        if not taus or self.mode == model.MARKOVIAN:
            return dt_req, 0, 0, False
        shortest = min(taus)
        m_short = max(1, math.ceil(shortest / (2 * dt_req)))
        for extra in range(4096):
            m = m_short + extra
            dt = shortest / (2 * m)
            k1 = self.tau1 / (2 * dt) if self.tau1 > 0 else 0.0
            k3 = self.tau3 / (2 * dt) if self.tau3 > 0 else 0.0
            if abs(k1 - round(k1)) < 1e-9 and abs(k3 - round(k3)) < 1e-9:
                adjusted = abs(dt - dt_req) > 1e-12
                return dt, int(round(k1)), int(round(k3)), adjusted
        raise ConfigError(
            f"cannot make tau1={self.tau1} and tau3={self.tau3} commensurate "
            "with one step size; give m1/m3 directly"
        )

    def initial_amplitudes(self):
        text = self.initial.strip()
        if text in model.INITIAL_STATE_PRESETS:
            return model.initial_state(text)
        parts = text.split(",")
        if len(parts) != 8:
            raise ConfigError(
                f"initial must be a preset {sorted(model.INITIAL_STATE_PRESETS)} "
                "or 8 comma-separated amplitudes"
            )
        try:
            amps = np.array([complex(x) for x in parts])
        except ValueError as exc:
            raise ConfigError(f"bad initial amplitudes: {text!r}") from exc
        norm = np.linalg.norm(amps)
        if norm == 0:
            raise ConfigError("initial amplitudes are all zero")
        return amps / norm

    def to_model_params(self):
        dt, m1, m3, adjusted = self.resolve_grid()
        phases = (self.phi1, self.phi2, self.phi3)
        markovian_phases = None
        if any(x is not None for x in phases):
            if any(x is None for x in phases):
                raise ConfigError("give all of phi1, phi2, phi3 or none")
            markovian_phases = tuple(float(x) for x in phases)
        try:
            params = model.ModelParams(
                gamma=self.gamma,
                delta1=self.delta1,
                delta3=self.delta3,
                m1=m1,
                m3=m3,
                dt=dt,
                phi_tau1=self.phi_tau1,
                phi_tau3=self.phi_tau3,
                p=self.p,
                mode=self.mode,
                initial_system=self.initial_amplitudes(),
                markovian_phases=markovian_phases,
            )
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        return params, adjusted

    def resolved_max_steps(self, params):
        if self.max_steps is not None:
            return self.max_steps
        return max(1, int(round(self.t_end / (self.gamma_ref * params.dt))))

    def run_kwargs(self):
        if self.trotter not in (model.FIRST_ORDER, model.SECOND_ORDER):
            raise ConfigError(f"trotter must be first-order or second-order")
        return dict(
            record_every=self.record_every,
            steady_tol=self.steady_tol,
            steady_window=self.steady_window,
            max_bond=self.max_bond,
            cutoff=self.cutoff,
            ordering=self.trotter,
            discard_budget=self.discard_budget,
        )


def parse_config_file(path):
    mapping = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
            key, value = line.split("=", 1)
            mapping[key.strip()] = value.strip()
    return mapping


# ---------------------------------------------------------------------- #
# output helpers                                                          #
# ---------------------------------------------------------------------- #


def _fmt(x):
    return f"{x:.12g}"


def write_trajectory_csv(path, traj):
    with open(path, "w") as fh:
        fh.write(
            "step,t_gamma,pop1,pop2,pop3,norm,total_excitation,"
            "discarded_weight_cum,max_bond\n"
        )
        for i, n in enumerate(traj.steps):
            row = [
                str(n),
                _fmt(traj.gamma_ref * n * traj.dt),
                _fmt(traj.pops[i][0]),
                _fmt(traj.pops[i][1]),
                _fmt(traj.pops[i][2]),
                _fmt(traj.norms[i]),
                _fmt(traj.total_excitation[i]),
                _fmt(traj.discarded_cum[i]),
                str(traj.max_bond[i]),
            ]
            fh.write(",".join(row) + "\n")


def write_bins_csv(path, traj):
    with open(path, "w") as fh:
        fh.write("bin_index,channel,occupation\n")
        for index, channel, occ, _ in sorted(traj.finalized, key=lambda e: (e[0], e[1])):
            fh.write(f"{index},{channel},{_fmt(occ)}\n")


def write_sweep_csv(path, rows):
    with open(path, "w") as fh:
        fh.write("phi1,phi3,I,pop1_ss,pop2_ss,pop3_ss\n")
        for phi1, phi3, res, pops in rows:
            fh.write(
                ",".join(
                    [_fmt(phi1), _fmt(phi3), _fmt(res), _fmt(pops[0]), _fmt(pops[1]), _fmt(pops[2])]
                )
                + "\n"
            )


def _summary(traj, verdict, params, reservoir):
    return {
        "mode": params.mode,
        "backend": backend_name(),
        "dt": params.dt,
        "m1": params.m1,
        "m3": params.m3,
        "steps": traj.steps[-1] if traj.steps else 0,
        "steady_reached": verdict.reached,
        "steady_at_step": verdict.at_step,
        "steady_residual": verdict.residual,
        "final_pop1": traj.pops[-1][0],
        "final_pop2": traj.pops[-1][1],
        "final_pop3": traj.pops[-1][2],
        "integrated_reservoir": reservoir,
        "discarded_weight_cum": traj.discarded_cum[-1],
        "max_bond": max(traj.max_bond),
    }


def _print_summary(tag, summary):
    parts = [tag] + [f"{k}={v}" for k, v in summary.items()]
    print(" ".join(parts))


# ---------------------------------------------------------------------- #
# subcommands                                                             #
# ---------------------------------------------------------------------- #


def cmd_trace(cfg):
    params, adjusted = cfg.to_model_params()
    traj, verdict = evolution.run(
        params, cfg.resolved_max_steps(params), **cfg.run_kwargs()
    )
    reservoir = evolution.integrated_reservoir(traj, params)
    write_trajectory_csv(f"{cfg.output}.traj.csv", traj)
    write_bins_csv(f"{cfg.output}.bins.csv", traj)
    summary = _summary(traj, verdict, params, reservoir)
    if adjusted:
        summary["dt_adjusted"] = True
    with open(f"{cfg.output}.summary.json", "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    _print_summary("trace", summary)
    return EXIT_OK


def _sweep_point(args):
    cfg_state, preset, phi1, phi3 = args
    cfg = RunConfig(**cfg_state)
    cfg.initial = preset
    cfg.phi1, cfg.phi2, cfg.phi3 = phi1, 0.0, phi3
    params, _ = cfg.to_model_params()
    traj, verdict = evolution.run(
        params, cfg.resolved_max_steps(params), **cfg.run_kwargs()
    )
    reservoir = evolution.integrated_reservoir(traj, params)
    return phi1, phi3, reservoir, tuple(traj.pops[-1])


def cmd_sweep_phases(cfg):
    if cfg.mode != model.MARKOVIAN:
        raise ConfigError("phase sweeps are defined for the delay-free mode")
    presets = [p.strip() for p in cfg.presets.split(",") if p.strip()]
    if cfg.sweep_n1 < 2 or cfg.sweep_n3 < 2:
        raise ConfigError("sweep resolutions must be at least 2")
    grid1 = np.linspace(0.0, 2 * np.pi, cfg.sweep_n1)
    grid3 = np.linspace(0.0, 2 * np.pi, cfg.sweep_n3)
    cfg_state = dataclasses.asdict(cfg)
    for preset in presets:
        tasks = [
            (cfg_state, preset, float(p1), float(p3)) for p1 in grid1 for p3 in grid3
        ]
        if cfg.workers > 1:
            with concurrent.futures.ProcessPoolExecutor(cfg.workers) as pool:
                rows = list(pool.map(_sweep_point, tasks))
        else:
            rows = [_sweep_point(t) for t in tasks]
        path = f"{cfg.output}.{preset}.sweep.csv"
        write_sweep_csv(path, rows)
        reservoirs = [r[2] for r in rows]
        print(
            f"sweep preset={preset} points={len(rows)} "
            f"I_min={_fmt(min(reservoirs))} I_max={_fmt(max(reservoirs))} file={path}"
        )
    return EXIT_OK


def cmd_compare_oracle(cfg):
    params, _ = cfg.to_model_params()
    if cfg.oracle == "brute":
        n_steps = cfg.oracle_steps
        tol = cfg.oracle_tol if cfg.oracle_tol is not None else 1e-10
        gates = model.build_step_gates(params, cfg.trotter)
        traj, _ = evolution.run(
            params,
            n_steps,
            record_every=1,
            steady_tol=0.0,
            steady_window=max(2 * gates.max_offset, 1),
            max_bond=0,
            cutoff=0.0,
            ordering=cfg.trotter,
            discard_budget=1.0,
        )
        ref = oracle.brute_force_run(params, n_steps, ordering=cfg.trotter)
        report = oracle.compare(traj, ref, tol)
    elif cfg.oracle == "lindblad":
        if params.mode != model.MARKOVIAN:
            raise ConfigError("the master-equation oracle needs the delay-free mode")
        tol = cfg.oracle_tol if cfg.oracle_tol is not None else 2e-2
        traj, _ = evolution.run(
            params, cfg.resolved_max_steps(params), **cfg.run_kwargs()
        )
        t_end = traj.steps[-1] * params.dt
        ref = oracle.lindblad_run(params, t_end, cfg.dt_ode / cfg.gamma_ref)
        report = oracle.compare(traj, ref, tol, interpolate=True)
    else:
        raise ConfigError(f"unknown oracle {cfg.oracle!r} (brute or lindblad)")
    for name, diff in sorted(report.diffs.items()):
        print(f"compare {cfg.oracle} {name} max_diff={diff:.3e} tol={report.tolerance:g}")
    print(f"compare {cfg.oracle} passed={report.passed}")
    return EXIT_OK if report.passed else EXIT_VERIFY


def cmd_convergence(cfg):
    params, _ = cfg.to_model_params()
    max_steps = cfg.resolved_max_steps(params)
    kwargs = cfg.run_kwargs()

    base, _ = evolution.run(params, max_steps, **kwargs)
    finer_p = dataclasses.replace(params, p=params.p + 1)
    traj_p, _ = evolution.run(finer_p, max_steps, **kwargs)
    p_dev = float(
        np.abs(base.pops_array()[: len(traj_p.steps)] - traj_p.pops_array()[: len(base.steps)]).max()
    )

    halved = dataclasses.replace(
        params, dt=params.dt / 2, m1=2 * params.m1, m3=2 * params.m3
    )
    traj_dt, _ = evolution.run(halved, 2 * max_steps, **kwargs)
    coarse = base.pops_array()
    fine = traj_dt.pops_array()[:: 2 * cfg.record_every][: coarse.shape[0]]
    dt_dev = float(np.abs(coarse[: fine.shape[0]] - fine).max())

    print(
        f"convergence p={params.p}->{params.p + 1} max_pop_dev={p_dev:.3e} "
        f"dt={params.dt:g}->{params.dt / 2:g} max_pop_dev={dt_dev:.3e}"
    )
    ok = p_dev <= 1e-3
    print(f"convergence passed={ok}")
    return EXIT_OK if ok else EXIT_VERIFY


# ---------------------------------------------------------------------- #
# entry point                                                             #
# ---------------------------------------------------------------------- #


def _add_common_flags(sub):
    sub.add_argument("--config", help="flat key = value configuration file")
    sub.add_argument(
        "--set",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="override one configuration key (repeatable)",
    )
    for f in dataclasses.fields(RunConfig):
        sub.add_argument(f"--{f.name.replace('_', '-')}", dest=f.name, default=None)


def build_parser():
    parser = argparse.ArgumentParser(
        prog="timebin-mps",
        description="Time-bin MPS simulator for three emitters on a waveguide",
    )
    subs = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("trace", "run one trajectory and write CSV + summary"),
        ("sweep-phases", "grid over local coupling phases (delay-free mode)"),
        ("compare-oracle", "cross-check against the dense or master-equation oracle"),
        ("convergence", "repeat a trace at higher bin dimension and half step"),
    ):
        sub = subs.add_parser(name, help=help_text)
        _add_common_flags(sub)
    return parser


def config_from_args(args):
    mapping = {}
    if args.config:
        mapping.update(parse_config_file(args.config))
    for item in args.set:
        if "=" not in item:
            raise ConfigError(f"--set needs KEY=VALUE, got {item!r}")
        key, value = item.split("=", 1)
        mapping[key] = value
    for f in dataclasses.fields(RunConfig):
        value = getattr(args, f.name, None)
        if value is not None:
            mapping[f.name] = value
    return RunConfig.from_mapping(mapping)


COMMANDS = {
    "trace": cmd_trace,
    "sweep-phases": cmd_sweep_phases,
    "compare-oracle": cmd_compare_oracle,
    "convergence": cmd_convergence,
}


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = config_from_args(args)
        return COMMANDS[args.command](cfg)
    except (ConfigError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except RunAbortedError as exc:
        print(f"aborted: {exc}", file=sys.stderr)
        return EXIT_ABORTED


if __name__ == "__main__":
    sys.exit(main())
