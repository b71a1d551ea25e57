"""Time-bin MPS simulator for three emitters on a bidirectional waveguide.

Evolves the joint emitter-field state in discrete time bins, either with the
full propagation delay between emitters (swap-based chain protocol) or in the
delay-free approximation that keeps only local coupling phases, and reproduces
the retardation-induced population-trapping phenomenology.
"""

from .backends import backend_name
from .evolution import (
    SteadyStateVerdict,
    Trajectory,
    detect_steady_state,
    integrated_reservoir,
    run,
    step_markovian,
    step_non_markovian,
)
from .model import (
    MARKOVIAN,
    NON_MARKOVIAN,
    EmitterAlgebra,
    ModelParams,
    StepGateSet,
    build_emitter_algebra,
    build_step_gates,
    build_step_generator,
    initial_state,
    markovian_jump_operators,
)
from .mps_engine import GateApplicationReport, SiteLabel, TimeBinMPS, init_vacuum
from .oracle import brute_force_run, compare, lindblad_run
from .tensor_core import SvdResult, contract, exponentiate_generator, svd_split

__version__ = "0.1.0"

__all__ = [
    "GateApplicationReport",
    "EmitterAlgebra",
    "MARKOVIAN",
    "ModelParams",
    "NON_MARKOVIAN",
    "SiteLabel",
    "SteadyStateVerdict",
    "StepGateSet",
    "SvdResult",
    "TimeBinMPS",
    "Trajectory",
    "backend_name",
    "brute_force_run",
    "build_emitter_algebra",
    "build_step_gates",
    "build_step_generator",
    "compare",
    "contract",
    "detect_steady_state",
    "exponentiate_generator",
    "init_vacuum",
    "initial_state",
    "integrated_reservoir",
    "lindblad_run",
    "markovian_jump_operators",
    "run",
    "step_markovian",
    "step_non_markovian",
    "svd_split",
]
